//! Feature compression: absolute BS and sample coordinates plus orientation
//! parameters are reduced to panel-relative angles, a slant distance, and the
//! static beam descriptors that pass through unchanged.
//!
//! All angles are in degrees. Longitude/latitude differences are projected to
//! local east/north meters with an equirectangular approximation, which stays
//! well under 0.1% error over the few-kilometer extents a single BS covers.

use serde::{Deserialize, Serialize};

use crate::data::BsRecord;
use crate::error::{Error, Result};

/// Meters per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsLocation {
    pub longitude: f64,
    pub latitude: f64,
    /// Meters above ground.
    pub antenna_height: f64,
}

impl BsLocation {
    pub fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::invalid(format!(
                "longitude {} out of range",
                self.longitude
            )));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::invalid(format!(
                "latitude {} out of range",
                self.latitude
            )));
        }
        if !(self.antenna_height > 0.0 && self.antenna_height.is_finite()) {
            return Err(Error::invalid(format!(
                "antenna height {} must be positive",
                self.antenna_height
            )));
        }
        Ok(())
    }
}

/// Static characteristics of the antenna beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamStatic {
    pub aau_type: String,
    pub num_channels: u32,
    pub coverage_scenario: String,
    /// MHz.
    pub carrier_frequency: f64,
}

impl BeamStatic {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::invalid("num_channels must be positive"));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "carrier frequency {} must be positive",
                self.carrier_frequency
            )));
        }
        Ok(())
    }
}

/// Parse a channel count from either a bare integer ("32") or a
/// transmit/receive label ("32T32R").
pub fn parse_channels(label: &str) -> Result<u32> {
    let label = label.trim();
    let digits: &str = match label.find(['T', 't']) {
        Some(idx) => &label[..idx],
        None => label,
    };
    let n: u32 = digits
        .parse()
        .map_err(|_| Error::invalid(format!("unrecognized channel label {label:?}")))?;
    if n == 0 {
        return Err(Error::invalid("num_channels must be positive"));
    }
    Ok(n)
}

/// Orientation of the antenna beam, stored unwrapped as given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamOrientation {
    /// Clockwise from true north.
    pub horizontal_azimuth: f64,
    pub beam_azimuth: f64,
    pub mechanical_down_tilt: f64,
    pub digital_down_tilt: f64,
}

impl BeamOrientation {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.horizontal_azimuth,
            self.beam_azimuth,
            self.mechanical_down_tilt,
            self.digital_down_tilt,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("orientation angles must be finite"))
        }
    }

    pub fn total_tilt(&self) -> f64 {
        self.mechanical_down_tilt + self.digital_down_tilt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditivePower {
    /// dBm.
    pub total_tx_power: f64,
    /// Count of power-sharing subunits; used directly as a divisor.
    pub bandwidth: f64,
    /// SSB bandwidth utilization in (0, 1].
    pub ssb_utilization_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub longitude: f64,
    pub latitude: f64,
    /// Meters.
    pub altitude: f64,
}

impl SamplePoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.longitude.is_finite() && self.latitude.is_finite() && self.altitude.is_finite()) {
            return Err(Error::invalid("sample coordinates must be finite"));
        }
        if self.altitude < 0.0 {
            return Err(Error::invalid(format!(
                "altitude {} is negative",
                self.altitude
            )));
        }
        Ok(())
    }
}

/// Local east/north/up offset in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuOffset {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

/// Decoupled inputs of the prediction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedFeatures {
    /// Horizontal angle off the panel normal, in (-180, 180].
    pub delta_theta_h: f64,
    /// Vertical angle off the total down tilt; not wrapped.
    pub delta_theta_v: f64,
    /// Slant distance in meters.
    pub distance: f64,
    /// MHz.
    pub carrier_frequency: f64,
    pub beam_static: BeamStatic,
}

/// Wrap an angle into (-180, 180].
pub fn wrap_degrees(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn enu_offset(bs: &BsLocation, pt: &SamplePoint) -> Result<EnuOffset> {
    let inputs = [
        bs.longitude,
        bs.latitude,
        bs.antenna_height,
        pt.longitude,
        pt.latitude,
        pt.altitude,
    ];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite coordinate"));
    }
    Ok(EnuOffset {
        east: (pt.longitude - bs.longitude) * bs.latitude.to_radians().cos() * METERS_PER_DEGREE,
        north: (pt.latitude - bs.latitude) * METERS_PER_DEGREE,
        up: pt.altitude - bs.antenna_height,
    })
}

/// Inverse of [`enu_offset`]: the sample point lying at `d` from the BS antenna.
pub fn point_at_offset(bs: &BsLocation, d: &EnuOffset) -> SamplePoint {
    SamplePoint {
        longitude: bs.longitude + d.east / (bs.latitude.to_radians().cos() * METERS_PER_DEGREE),
        latitude: bs.latitude + d.north / METERS_PER_DEGREE,
        altitude: bs.antenna_height + d.up,
    }
}

/// Bearing from true north and elevation above the horizontal, in degrees.
pub fn bearing_angles(d: &EnuOffset) -> Result<(f64, f64)> {
    let horizontal = d.east.hypot(d.north);
    if horizontal == 0.0 {
        return Err(Error::DegenerateGeometry(
            "sample lies directly above or below the antenna".into(),
        ));
    }
    let theta_h = wrap_degrees(d.east.atan2(d.north).to_degrees());
    let theta_v = (d.up / horizontal).atan().to_degrees();
    Ok((theta_h, theta_v))
}

/// Angles relative to the antenna panel normal.
pub fn relative_angles(theta_h: f64, theta_v: f64, o: &BeamOrientation) -> (f64, f64) {
    let dh = wrap_degrees(theta_h - o.horizontal_azimuth - o.beam_azimuth);
    let dv = theta_v - o.mechanical_down_tilt - o.digital_down_tilt;
    (dh, dv)
}

pub fn slant_distance(d: &EnuOffset) -> Result<f64> {
    let dist = (d.east * d.east + d.north * d.north + d.up * d.up).sqrt();
    if dist == 0.0 {
        return Err(Error::DegenerateGeometry("zero offset".into()));
    }
    Ok(dist)
}

/// Effective SSB transmit power in dBm.
pub fn ssb_tx_power(a: &AdditivePower) -> Result<f64> {
    if !(a.bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth {} must be positive",
            a.bandwidth
        )));
    }
    if !(a.ssb_utilization_sigma > 0.0 && a.ssb_utilization_sigma <= 1.0) {
        return Err(Error::invalid(format!(
            "sigma {} must lie in (0, 1]",
            a.ssb_utilization_sigma
        )));
    }
    Ok(a.total_tx_power - 10.0 * a.bandwidth.log10() - 10.0 * a.ssb_utilization_sigma.log10())
}

pub fn compress(bs: &BsRecord, pt: &SamplePoint) -> Result<CompressedFeatures> {
    let d = enu_offset(&bs.location, pt)?;
    let (theta_h, theta_v) = bearing_angles(&d)?;
    let (delta_theta_h, delta_theta_v) = relative_angles(theta_h, theta_v, &bs.orientation);
    let distance = slant_distance(&d)?;
    Ok(CompressedFeatures {
        delta_theta_h,
        delta_theta_v,
        distance,
        carrier_frequency: bs.static_params.carrier_frequency,
        beam_static: bs.static_params.clone(),
    })
}

/// Subtract the SSB transmit power from every RSRP entry.
pub fn target_transform(p: &[f64], p_t: f64, expected_len: usize) -> Result<Vec<f64>> {
    if p.len() != expected_len {
        return Err(Error::Shape {
            expected: expected_len,
            got: p.len(),
        });
    }
    Ok(p.iter().map(|v| v - p_t).collect())
}

pub fn target_inverse(y: &[f64], p_t: f64) -> Vec<f64> {
    y.iter().map(|v| v + p_t).collect()
}
