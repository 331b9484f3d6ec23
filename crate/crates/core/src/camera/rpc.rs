use serde::{Deserialize, Serialize};

use super::CameraError;

/// Denominator magnitude below which an RPC evaluation is rejected.
pub const RPC_SINGULAR_EPS: f64 = 1e-10;

/// Normalized coordinates beyond this magnitude are outside the fitted domain.
const VALIDITY_BOUND: f64 = 1.5;

/// Per-axis offsets or scales of an RPC model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcNormalization {
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
    pub line: f64,
    pub samp: f64,
}

/// Rational polynomial camera with cubic numerators and denominators in the
/// RPC00B term ordering:
///
/// `1, L, P, H, LP, LH, PH, L², P², H², PLH, L³, LP², LH², L²P, P³, PH², L²H, P²H, H³`
///
/// where `L`, `P`, `H` are normalized longitude, latitude and height.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcCamera {
    line_num: [f64; 20],
    line_den: [f64; 20],
    samp_num: [f64; 20],
    samp_den: [f64; 20],
    offsets: RpcNormalization,
    scales: RpcNormalization,
}

/// Result of an RPC projection. `within_validity` is false when any normalized
/// input coordinate exceeds the soft validity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpcPixel {
    pub sample: f64,
    pub line: f64,
    pub within_validity: bool,
}

impl RpcCamera {
    /// Builds a model, rescaling each numerator/denominator pair so the
    /// denominator's constant term is 1.
    pub fn new(
        line_num: [f64; 20],
        line_den: [f64; 20],
        samp_num: [f64; 20],
        samp_den: [f64; 20],
        offsets: RpcNormalization,
        scales: RpcNormalization,
    ) -> Result<Self, CameraError> {
        let s = scales;
        for (name, v) in [
            ("lat", s.lat),
            ("lon", s.lon),
            ("height", s.height),
            ("line", s.line),
            ("samp", s.samp),
        ] {
            if v == 0.0 || !v.is_finite() {
                return Err(CameraError::InvalidRpc(format!("{name} scale must be finite and nonzero")));
            }
        }
        let all = line_num.iter().chain(&line_den).chain(&samp_num).chain(&samp_den);
        let offs = [offsets.lat, offsets.lon, offsets.height, offsets.line, offsets.samp];
        if all.chain(offs.iter()).any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidRpc("non-finite coefficient".into()));
        }
        let (line_num, line_den) = normalize_pair(line_num, line_den, "line")?;
        let (samp_num, samp_den) = normalize_pair(samp_num, samp_den, "samp")?;
        Ok(Self { line_num, line_den, samp_num, samp_den, offsets, scales })
    }

    pub fn line_num(&self) -> &[f64; 20] {
        &self.line_num
    }
    pub fn line_den(&self) -> &[f64; 20] {
        &self.line_den
    }
    pub fn samp_num(&self) -> &[f64; 20] {
        &self.samp_num
    }
    pub fn samp_den(&self) -> &[f64; 20] {
        &self.samp_den
    }
    pub fn offsets(&self) -> &RpcNormalization {
        &self.offsets
    }
    pub fn scales(&self) -> &RpcNormalization {
        &self.scales
    }

    /// Same model with the image origin moved to `(samp0, line0)`, e.g. after cropping.
    pub fn cropped(&self, samp0: f64, line0: f64) -> Self {
        let mut out = self.clone();
        out.offsets.samp -= samp0;
        out.offsets.line -= line0;
        out
    }

    pub fn project(&self, lat: f64, lon: f64, height: f64) -> Result<RpcPixel, CameraError> {
        let o = &self.offsets;
        let s = &self.scales;
        let p = (lat - o.lat) / s.lat;
        let l = (lon - o.lon) / s.lon;
        let h = (height - o.height) / s.height;
        let terms = cubic_terms(l, p, h);
        let eval = |c: &[f64; 20]| c.iter().zip(&terms).map(|(a, b)| a * b).sum::<f64>();
        let line_den = eval(&self.line_den);
        let samp_den = eval(&self.samp_den);
        for den in [line_den, samp_den] {
            if den.abs() < RPC_SINGULAR_EPS {
                return Err(CameraError::SingularRpc(den));
            }
        }
        Ok(RpcPixel {
            sample: o.samp + s.samp * eval(&self.samp_num) / samp_den,
            line: o.line + s.line * eval(&self.line_num) / line_den,
            within_validity: [p, l, h].iter().all(|v| v.abs() <= VALIDITY_BOUND),
        })
    }
}

fn normalize_pair(
    mut num: [f64; 20],
    mut den: [f64; 20],
    which: &str,
) -> Result<([f64; 20], [f64; 20]), CameraError> {
    let c = den[0];
    if c == 0.0 {
        return Err(CameraError::InvalidRpc(format!("{which} denominator vanishes at the normalized origin")));
    }
    num.iter_mut().for_each(|v| *v /= c);
    den.iter_mut().for_each(|v| *v /= c);
    Ok((num, den))
}

/// The 20 cubic monomials in RPC00B order.
fn cubic_terms(l: f64, p: f64, h: f64) -> [f64; 20] {
    [
        1.0,
        l,
        p,
        h,
        l * p,
        l * h,
        p * h,
        l * l,
        p * p,
        h * h,
        p * l * h,
        l * l * l,
        l * p * p,
        l * h * h,
        l * l * p,
        p * p * p,
        p * h * h,
        l * l * h,
        p * p * h,
        h * h * h,
    ]
}

/// Evaluates an RPC model at a geodetic position (degrees, meters).
pub fn rpc_project(rpc: &RpcCamera, lat: f64, lon: f64, height: f64) -> Result<RpcPixel, CameraError> {
    rpc.project(lat, lon, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(lat: f64, lon: f64, height: f64, line: f64, samp: f64) -> RpcNormalization {
        RpcNormalization { lat, lon, height, line, samp }
    }

    fn constant(c: f64) -> RpcCamera {
        let mut num = [0.0; 20];
        num[0] = c;
        let mut den = [0.0; 20];
        den[0] = 1.0;
        RpcCamera::new(num, den, num, den, norm(-34.5, -58.6, 20.0, 5000.0, 6000.0), norm(0.1, 0.1, 500.0, 5000.0, 6000.0))
            .unwrap()
    }

    #[test]
    fn constant_polynomial_at_offsets() {
        let rpc = constant(0.25);
        let px = rpc_project(&rpc, -34.5, -58.6, 20.0).unwrap();
        assert_eq!(px.sample, 6000.0 + 0.25 * 6000.0);
        assert_eq!(px.line, 5000.0 + 0.25 * 5000.0);
        assert!(px.within_validity);
    }

    #[test]
    fn denominator_rescaled_on_load() {
        let mut num = [0.0; 20];
        num[1] = 4.0;
        let mut den = [0.0; 20];
        den[0] = 2.0;
        den[3] = 0.5;
        let rpc = RpcCamera::new(num, den, num, den, norm(0.0, 0.0, 0.0, 0.0, 0.0), norm(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(rpc.line_den()[0], 1.0);
        assert_eq!(rpc.line_den()[3], 0.25);
        assert_eq!(rpc.line_num()[1], 2.0);
        // ratio unchanged: L / (1 + H/4) at L = 0.5, H = 0.4
        let px = rpc.project(0.0, 0.5, 0.4).unwrap();
        assert!((px.line - 4.0 * 0.5 / (2.0 + 0.5 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid() {
        let num = [0.0; 20];
        let mut den = [0.0; 20];
        den[0] = 1.0;
        let ok = norm(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!(RpcCamera::new(num, den, num, den, ok, norm(1.0, 0.0, 1.0, 1.0, 1.0)).is_err());
        assert!(RpcCamera::new(num, [0.0; 20], num, den, ok, ok).is_err());
    }

    #[test]
    fn singular_denominator() {
        let num = [0.0; 20];
        let mut den = [0.0; 20];
        den[0] = 1.0;
        den[1] = -1.0; // 1 - L vanishes at L = 1
        let rpc = RpcCamera::new(num, den, num, den, norm(0.0, 0.0, 0.0, 0.0, 0.0), norm(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(rpc.project(0.0, 1.0, 0.0), Err(CameraError::SingularRpc(_))));
    }

    #[test]
    fn validity_flag() {
        let rpc = constant(0.0);
        let px = rpc.project(-34.5 + 0.2, -58.6, 20.0).unwrap();
        assert!(!px.within_validity);
    }

    #[test]
    fn cropped_shifts_pixels() {
        let rpc = constant(0.1);
        let a = rpc.project(-34.5, -58.6, 20.0).unwrap();
        let b = rpc.cropped(100.0, 40.0).project(-34.5, -58.6, 20.0).unwrap();
        assert_eq!(a.sample - 100.0, b.sample);
        assert_eq!(a.line - 40.0, b.line);
    }
}
