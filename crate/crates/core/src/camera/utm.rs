//! WGS84 UTM <-> geodetic conversion using the Krüger series carried to sixth
//! order in the third flattening `n`, which is accurate to well below a
//! millimeter inside a zone.

use serde::{Deserialize, Serialize};

use super::CameraError;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "S")]
    South,
}

impl std::str::FromStr for Hemisphere {
    type Err = CameraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "n" | "north" => Ok(Self::North),
            "S" | "s" | "south" => Ok(Self::South),
            other => Err(CameraError::InvalidUtm(format!("unknown hemisphere {other:?}"))),
        }
    }
}

impl std::fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::North => "N",
            Self::South => "S",
        })
    }
}

struct Series {
    e: f64,
    rectifying_radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> Series {
    let n = WGS84_F / (2.0 - WGS84_F);
    let n2 = n * n;
    let n3 = n2 * n;
    let n4 = n3 * n;
    let n5 = n4 * n;
    let n6 = n5 * n;
    let rectifying_radius = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    let alpha = [
        n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
            + 7891.0 * n6 / 37800.0,
        13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
            - 1_983_433.0 * n6 / 1_935_360.0,
        61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167_603.0 * n6 / 181_440.0,
        49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
        34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
        212_378_941.0 * n6 / 319_334_400.0,
    ];
    let beta = [
        n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
            + 96199.0 * n6 / 604_800.0,
        n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1_118_711.0 * n6 / 3_870_720.0,
        17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
        4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
        4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
        20_648_693.0 * n6 / 638_668_800.0,
    ];
    Series { e: (WGS84_F * (2.0 - WGS84_F)).sqrt(), rectifying_radius, alpha, beta }
}

fn central_meridian(zone: u8) -> f64 {
    f64::from(zone) * 6.0 - 183.0
}

fn check_zone(zone: u8) -> Result<(), CameraError> {
    if (1..=60).contains(&zone) {
        Ok(())
    } else {
        Err(CameraError::InvalidUtm(format!("zone {zone} outside [1, 60]")))
    }
}

/// tan of the conformal latitude for `tau = tan(phi)`.
fn conformal_tan(tau: f64, e: f64) -> f64 {
    let sigma = (e * (e * tau / tau.hypot(1.0)).atanh()).sinh();
    tau * sigma.hypot(1.0) - sigma * tau.hypot(1.0)
}

/// Inverts [`conformal_tan`] by Newton iteration.
fn geodetic_tan(tau_prime: f64, e: f64) -> f64 {
    let e2m = 1.0 - e * e;
    let mut tau = tau_prime;
    for _ in 0..8 {
        let tp = conformal_tan(tau, e);
        let dtau = (tau_prime - tp) / tp.hypot(1.0) * (1.0 + e2m * tau * tau)
            / (e2m * tau.hypot(1.0));
        tau += dtau;
        if dtau.abs() <= 1e-15 * tau.abs().max(1.0) {
            break;
        }
    }
    tau
}

/// Forward conversion of a geodetic position (degrees) to UTM coordinates in
/// the given zone and hemisphere.
pub fn geodetic_to_utm(
    lat: f64,
    lon: f64,
    zone: u8,
    hemisphere: Hemisphere,
) -> Result<(f64, f64), CameraError> {
    check_zone(zone)?;
    if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
        return Err(CameraError::InvalidUtm(format!("latitude {lat} out of range")));
    }
    let s = series();
    let phi = lat.to_radians();
    let lam = (lon - central_meridian(zone)).to_radians();
    let tau_p = conformal_tan(phi.tan(), s.e);
    let xi_p = tau_p.atan2(lam.cos());
    let eta_p = (lam.sin() / tau_p.hypot(lam.cos())).asinh();
    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let easting = FALSE_EASTING + K0 * s.rectifying_radius * eta;
    let mut northing = K0 * s.rectifying_radius * xi;
    if hemisphere == Hemisphere::South {
        northing += FALSE_NORTHING_SOUTH;
    }
    Ok((easting, northing))
}

/// Inverse conversion of UTM coordinates to geodetic `(lat, lon)` in degrees.
pub fn utm_to_geodetic(
    easting: f64,
    northing: f64,
    zone: u8,
    hemisphere: Hemisphere,
) -> Result<(f64, f64), CameraError> {
    check_zone(zone)?;
    if !(easting > 0.0 && easting < 1e6) {
        return Err(CameraError::InvalidUtm(format!("easting {easting} outside (0, 1e6)")));
    }
    if !(0.0..=1e7).contains(&northing) {
        return Err(CameraError::InvalidUtm(format!("northing {northing} outside [0, 1e7]")));
    }
    let s = series();
    let northing = match hemisphere {
        Hemisphere::North => northing,
        Hemisphere::South => northing - FALSE_NORTHING_SOUTH,
    };
    let xi = northing / (K0 * s.rectifying_radius);
    let eta = (easting - FALSE_EASTING) / (K0 * s.rectifying_radius);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let tau_p = xi_p.sin() / eta_p.sinh().hypot(xi_p.cos());
    let tau = geodetic_tan(tau_p, s.e);
    let lat = tau.atan().to_degrees();
    let lon = central_meridian(zone) + eta_p.sinh().atan2(xi_p.cos()).to_degrees();
    Ok((lat, lon))
}
