//! Synthetic ground truth from a known separable propagation model.
//!
//! Every beam's received power is
//! `p = p_T + G(Δθh, Δθv; beam, family) + α·log10(D) + β·log10(f) + c + G_rx`,
//! with a quadratic-in-dB sector pattern for `G` and optional i.i.d. Gaussian
//! noise. The SS-RSRP column is the maximum over the (noisy) beam values.
//!
//! Each (AAU type, coverage scenario) pair selects its own beam family: the
//! AAU type scales horizontal beamwidths and shifts peak gain, the coverage
//! scenario shifts pointing tilt and scales vertical beamwidths.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BsRecord, MeasurementSample, SigmaEntry, SigmaTable};
use crate::error::{Error, Result};
use crate::geo::{
    compress, point_at_offset, AdditivePower, BeamOrientation, BeamStatic, BsLocation,
    CompressedFeatures, EnuOffset,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPattern {
    /// Degrees relative to the panel normal.
    pub pointing_azimuth_offset: f64,
    pub pointing_tilt_offset: f64,
    pub hbw_3db: f64,
    pub vbw_3db: f64,
    /// dBi.
    pub max_gain: f64,
    /// Maximum attenuation below `max_gain`, dB.
    pub attenuation_floor: f64,
}

impl BeamPattern {
    fn validate(&self) -> Result<()> {
        if !(self.hbw_3db > 0.0 && self.vbw_3db > 0.0 && self.attenuation_floor > 0.0) {
            return Err(Error::invalid(format!("invalid beam pattern {self:?}")));
        }
        Ok(())
    }
}

/// Sector-beam gain in dBi at the given panel-relative angles.
pub fn synthetic_gain(b: &BeamPattern, dth: f64, dtv: f64) -> f64 {
    let h = (dth - b.pointing_azimuth_offset) / b.hbw_3db;
    let v = (dtv - b.pointing_tilt_offset) / b.vbw_3db;
    b.max_gain - (12.0 * h * h + 12.0 * v * v).min(b.attenuation_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AauProfile {
    pub name: String,
    pub channels: u32,
    pub gain_offset_db: f64,
    pub hbw_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageProfile {
    pub name: String,
    pub tilt_offset_deg: f64,
    pub vbw_scale: f64,
}

/// Ranges BS parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    /// (longitude, latitude) of the deployment area center.
    pub center: [f64; 2],
    /// BSs are placed uniformly in a disc of this radius, meters.
    pub area_radius_m: f64,
    pub antenna_height_m: [f64; 2],
    pub mech_tilt_deg: [f64; 2],
    pub digital_tilt_deg: [f64; 2],
    pub beam_azimuth_deg: [f64; 2],
    pub frequencies_mhz: Vec<f64>,
    pub tx_power_dbm: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Samples are drawn in a disc of this radius around their BS, meters.
    pub sample_radius_m: f64,
    pub min_sample_distance_m: f64,
    pub altitudes_m: Vec<f64>,
}

impl Default for Deployment {
    fn default() -> Self {
        Deployment {
            center: [115.9, 28.7],
            area_radius_m: 3000.0,
            antenna_height_m: [20.0, 50.0],
            mech_tilt_deg: [0.0, 15.0],
            digital_tilt_deg: [0.0, 15.0],
            beam_azimuth_deg: [-30.0, 30.0],
            frequencies_mhz: vec![2565.0, 3500.0, 4850.0],
            tx_power_dbm: vec![46.0, 49.0, 52.0],
            bandwidths: vec![1638.0, 3276.0],
            sample_radius_m: 2000.0,
            min_sample_distance_m: 50.0,
            altitudes_m: vec![150.0, 300.0, 500.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    /// dB per decade of distance.
    pub alpha: f64,
    /// dB per decade of carrier frequency.
    pub beta: f64,
    pub const_offset: f64,
    pub noise_std: f64,
    pub rx_gain: f64,
    pub beams: Vec<BeamPattern>,
    pub aau_types: Vec<AauProfile>,
    pub coverage_scenarios: Vec<CoverageProfile>,
    #[serde(default)]
    pub sigma_table: SigmaTable,
    #[serde(default)]
    pub deployment: Deployment,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        let beams = (0..8)
            .map(|m| BeamPattern {
                pointing_azimuth_offset: -52.5 + 15.0 * m as f64,
                pointing_tilt_offset: if m % 2 == 0 { 0.0 } else { 8.0 },
                hbw_3db: 20.0,
                vbw_3db: 14.0,
                max_gain: 17.0 + (m % 3) as f64,
                attenuation_floor: 25.0,
            })
            .collect();
        SyntheticScenario {
            alpha: -22.0,
            beta: -20.0,
            const_offset: 15.0,
            noise_std: 0.0,
            rx_gain: 0.0,
            beams,
            aau_types: vec![
                AauProfile {
                    name: "AAU5613".into(),
                    channels: 64,
                    gain_offset_db: 1.5,
                    hbw_scale: 0.8,
                },
                AauProfile {
                    name: "AAU5639".into(),
                    channels: 32,
                    gain_offset_db: 0.0,
                    hbw_scale: 1.0,
                },
                AauProfile {
                    name: "AAU3971".into(),
                    channels: 8,
                    gain_offset_db: -2.0,
                    hbw_scale: 1.5,
                },
            ],
            coverage_scenarios: vec![
                CoverageProfile {
                    name: "SCENARIO_0".into(),
                    tilt_offset_deg: 0.0,
                    vbw_scale: 1.0,
                },
                CoverageProfile {
                    name: "SCENARIO_21".into(),
                    tilt_offset_deg: 20.0,
                    vbw_scale: 1.6,
                },
            ],
            sigma_table: SigmaTable {
                entries: vec![SigmaEntry {
                    carrier_frequency_mhz: 4850.0,
                    bandwidth: 3276.0,
                    sigma: 0.63,
                }],
            },
            deployment: Deployment::default(),
        }
    }
}

impl SyntheticScenario {
    pub fn m_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beams.is_empty() {
            return Err(Error::invalid("scenario needs at least one beam"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be nonnegative"));
        }
        if self.rx_gain != 0.0 {
            return Err(Error::invalid(
                "receiver is omnidirectional; rx_gain must be 0",
            ));
        }
        if self.aau_types.is_empty() || self.coverage_scenarios.is_empty() {
            return Err(Error::invalid("category vocabularies must be nonempty"));
        }
        for b in &self.beams {
            b.validate()?;
        }
        for a in &self.aau_types {
            if a.channels == 0 || !(a.hbw_scale > 0.0) {
                return Err(Error::invalid(format!("invalid AAU profile {a:?}")));
            }
        }
        if self.coverage_scenarios.iter().any(|c| !(c.vbw_scale > 0.0)) {
            return Err(Error::invalid("vbw_scale must be positive"));
        }
        let d = &self.deployment;
        if d.frequencies_mhz.is_empty()
            || d.tx_power_dbm.is_empty()
            || d.bandwidths.is_empty()
            || d.altitudes_m.is_empty()
        {
            return Err(Error::invalid("deployment choice lists must be nonempty"));
        }
        if !(d.sample_radius_m > d.min_sample_distance_m && d.min_sample_distance_m > 0.0) {
            return Err(Error::invalid(
                "sample radius must exceed the minimum distance",
            ));
        }
        if d.antenna_height_m[0] <= 0.0 || d.altitudes_m.iter().any(|a| *a < 0.0) {
            return Err(Error::invalid("heights must be positive"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: SyntheticScenario =
            toml::from_str(text).map_err(|e| Error::Format(format!("scenario config: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Beam patterns for one (AAU type, coverage scenario) pair. Unknown
    /// labels fall back to the unmodified base beams.
    pub fn beam_family(&self, aau_type: &str, coverage_scenario: &str) -> Vec<BeamPattern> {
        let aau = self.aau_types.iter().find(|a| a.name == aau_type);
        let cov = self
            .coverage_scenarios
            .iter()
            .find(|c| c.name == coverage_scenario);
        self.beams
            .iter()
            .map(|b| {
                let mut b = b.clone();
                if let Some(a) = aau {
                    b.hbw_3db *= a.hbw_scale;
                    b.pointing_azimuth_offset *= a.hbw_scale;
                    b.max_gain += a.gain_offset_db;
                }
                if let Some(c) = cov {
                    b.vbw_3db *= c.vbw_scale;
                    b.pointing_tilt_offset += c.tilt_offset_deg;
                }
                b
            })
            .collect()
    }

    /// Per-beam antenna gains (length M) at the given features.
    pub fn beam_gains(&self, cf: &CompressedFeatures) -> Vec<f64> {
        self.beam_family(&cf.beam_static.aau_type, &cf.beam_static.coverage_scenario)
            .iter()
            .map(|b| synthetic_gain(b, cf.delta_theta_h, cf.delta_theta_v))
            .collect()
    }

    /// Noiseless per-beam RSRP (length M, without the SS-RSRP entry).
    pub fn beam_rsrp(&self, bs: &BsRecord, cf: &CompressedFeatures) -> Result<Vec<f64>> {
        let p_t = bs.ssb_tx_power()?;
        let fading = synthetic_path_fading(cf.distance, cf.carrier_frequency, self)?;
        Ok(self
            .beam_gains(cf)
            .into_iter()
            .map(|g| p_t + g + fading + self.rx_gain)
            .collect())
    }
}

pub fn synthetic_path_fading(d: f64, f: f64, s: &SyntheticScenario) -> Result<f64> {
    if !(d > 0.0 && f > 0.0) {
        return Err(Error::invalid(format!(
            "distance {d} and frequency {f} must be positive"
        )));
    }
    Ok(s.alpha * d.log10() + s.beta * f.log10() + s.const_offset)
}

/// Prepend the SS-RSRP (maximum over beams) to a beam vector.
pub fn with_ss_rsrp(beams: &[f64]) -> Vec<f64> {
    let ss = beams.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    std::iter::once(ss).chain(beams.iter().copied()).collect()
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    *items.choose(rng).expect("nonempty choice list")
}

/// Draw BS records and their measurement samples. Fully determined by
/// `(scenario, counts, seed)`.
pub fn generate_dataset(
    s: &SyntheticScenario,
    n_bs: usize,
    samples_per_bs: usize,
    seed: u64,
) -> Result<(Vec<BsRecord>, Vec<MeasurementSample>)> {
    s.validate()?;
    if n_bs == 0 || samples_per_bs == 0 {
        return Err(Error::invalid("counts must be at least 1"));
    }
    let d = &s.deployment;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, s.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let width = n_bs.to_string().len().max(3);

    let mut bss = Vec::with_capacity(n_bs);
    for i in 0..n_bs {
        let r = d.area_radius_m * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let center = BsLocation {
            longitude: d.center[0],
            latitude: d.center[1],
            antenna_height: 1.0,
        };
        let at = point_at_offset(
            &center,
            &EnuOffset {
                east: r * phi.sin(),
                north: r * phi.cos(),
                up: 0.0,
            },
        );
        let aau = &s.aau_types[rng.random_range(0..s.aau_types.len())];
        let cov = &s.coverage_scenarios[rng.random_range(0..s.coverage_scenarios.len())];
        let carrier_frequency = pick(&mut rng, &d.frequencies_mhz);
        let bandwidth = pick(&mut rng, &d.bandwidths);
        let record = BsRecord {
            bs_id: format!("BS{:0width$}", i + 1),
            location: BsLocation {
                longitude: at.longitude,
                latitude: at.latitude,
                antenna_height: uniform(&mut rng, d.antenna_height_m),
            },
            static_params: BeamStatic {
                aau_type: aau.name.clone(),
                num_channels: aau.channels,
                coverage_scenario: cov.name.clone(),
                carrier_frequency,
            },
            orientation: BeamOrientation {
                horizontal_azimuth: rng.random_range(0.0..360.0),
                beam_azimuth: uniform(&mut rng, d.beam_azimuth_deg),
                mechanical_down_tilt: uniform(&mut rng, d.mech_tilt_deg),
                digital_down_tilt: uniform(&mut rng, d.digital_tilt_deg),
            },
            power: AdditivePower {
                total_tx_power: pick(&mut rng, &d.tx_power_dbm),
                bandwidth,
                ssb_utilization_sigma: s.sigma_table.lookup(carrier_frequency, bandwidth),
            },
        };
        record.validate()?;
        bss.push(record);
    }

    let mut samples = Vec::with_capacity(n_bs * samples_per_bs);
    let (r_min, r_max) = (d.min_sample_distance_m, d.sample_radius_m);
    for bs in &bss {
        for _ in 0..samples_per_bs {
            // uniform over the annulus area
            let u: f64 = rng.random();
            let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let alt = pick(&mut rng, &d.altitudes_m);
            let mut point = point_at_offset(
                &bs.location,
                &EnuOffset {
                    east: r * phi.sin(),
                    north: r * phi.cos(),
                    up: 0.0,
                },
            );
            point.altitude = alt;
            let cf = compress(bs, &point)?;
            let mut beams = s.beam_rsrp(bs, &cf)?;
            if s.noise_std > 0.0 {
                for v in &mut beams {
                    *v += noise.sample(&mut rng);
                }
            }
            let rsrp = with_ss_rsrp(&beams);
            samples.push(MeasurementSample {
                bs_id: bs.bs_id.clone(),
                point,
                observed: vec![true; rsrp.len()],
                rsrp,
            });
        }
    }
    Ok((bss, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_bs_table, parse_measurements, write_bs_table, write_measurements};

    fn beam() -> BeamPattern {
        BeamPattern {
            pointing_azimuth_offset: 10.0,
            pointing_tilt_offset: -5.0,
            hbw_3db: 20.0,
            vbw_3db: 10.0,
            max_gain: 18.0,
            attenuation_floor: 25.0,
        }
    }

    #[test]
    fn gain_examples() {
        let b = beam();
        assert_eq!(synthetic_gain(&b, 10.0, -5.0), 18.0);
        assert_eq!(synthetic_gain(&b, 20.0, -5.0), 15.0);
        assert_eq!(synthetic_gain(&b, 100.0, -5.0), 18.0 - 25.0);
    }

    #[test]
    fn path_fading_examples() {
        let s = SyntheticScenario {
            const_offset: 0.0,
            ..Default::default()
        };
        assert_eq!(
            synthetic_path_fading(
                1.0,
                1.0,
                &SyntheticScenario {
                    const_offset: 7.5,
                    ..s.clone()
                }
            )
            .unwrap(),
            7.5
        );
        let v = synthetic_path_fading(100.0, 3500.0, &s).unwrap();
        assert!((v - (-114.8814)).abs() < 1e-4, "{v}");
        let d = synthetic_path_fading(200.0, 3500.0, &s).unwrap() - v;
        assert!((d - (-6.6227)).abs() < 1e-4, "{d}");
        assert!(synthetic_path_fading(0.0, 3500.0, &s).is_err());
        assert!(synthetic_path_fading(10.0, -1.0, &s).is_err());
    }

    #[test]
    fn ss_rsrp_is_row_maximum() {
        let s = SyntheticScenario {
            noise_std: 2.0,
            ..Default::default()
        };
        let (_, samples) = generate_dataset(&s, 4, 50, 1).unwrap();
        for smp in &samples {
            let max = smp.rsrp[1..]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(smp.rsrp[0], max);
            assert!(smp.rsrp[1..].iter().all(|v| *v <= smp.rsrp[0]));
        }
    }

    #[test]
    fn generation_is_deterministic_to_the_byte() {
        let s = SyntheticScenario {
            noise_std: 1.0,
            ..Default::default()
        };
        let render = |seed| {
            let (b, m) = generate_dataset(&s, 5, 20, seed).unwrap();
            let mut out = Vec::new();
            write_bs_table(&mut out, &b).unwrap();
            write_measurements(&mut out, &m, s.m_beams()).unwrap();
            out
        };
        assert_eq!(render(42), render(42));
        assert_ne!(render(42), render(43));
    }

    /// Independent restatement of the propagation model for the emitted rows.
    fn recompute(s: &SyntheticScenario, bs: &BsRecord, smp: &MeasurementSample) -> Vec<f64> {
        let lat0 = bs.location.latitude.to_radians();
        let east = (smp.point.longitude - bs.location.longitude) * lat0.cos() * 111_320.0;
        let north = (smp.point.latitude - bs.location.latitude) * 111_320.0;
        let up = smp.point.altitude - bs.location.antenna_height;
        let horiz = (east * east + north * north).sqrt();
        let mut dh = east.atan2(north).to_degrees()
            - bs.orientation.horizontal_azimuth
            - bs.orientation.beam_azimuth;
        while dh > 180.0 {
            dh -= 360.0;
        }
        while dh <= -180.0 {
            dh += 360.0;
        }
        let dv = (up / horiz).atan().to_degrees()
            - bs.orientation.mechanical_down_tilt
            - bs.orientation.digital_down_tilt;
        let dist = (horiz * horiz + up * up).sqrt();
        let f = bs.static_params.carrier_frequency;
        let p_t = bs.power.total_tx_power
            - 10.0 * bs.power.bandwidth.log10()
            - 10.0 * bs.power.ssb_utilization_sigma.log10();
        let fam = s.beam_family(
            &bs.static_params.aau_type,
            &bs.static_params.coverage_scenario,
        );
        let beams: Vec<f64> = fam
            .iter()
            .map(|b| {
                let h = (dh - b.pointing_azimuth_offset) / b.hbw_3db;
                let v = (dv - b.pointing_tilt_offset) / b.vbw_3db;
                let g = b.max_gain - (12.0 * (h * h + v * v)).min(b.attenuation_floor);
                p_t + g + s.alpha * dist.log10() + s.beta * f.log10() + s.const_offset
            })
            .collect();
        with_ss_rsrp(&beams)
    }

    #[test]
    fn noiseless_rows_recompute_from_emitted_parameters() {
        let s = SyntheticScenario::default();
        let (bss, samples) = generate_dataset(&s, 6, 40, 9).unwrap();
        // go through the CSV files to check what was actually emitted
        let mut b_csv = Vec::new();
        write_bs_table(&mut b_csv, &bss).unwrap();
        let mut m_csv = Vec::new();
        write_measurements(&mut m_csv, &samples, s.m_beams()).unwrap();
        let bss = parse_bs_table(b_csv.as_slice(), &SigmaTable::default()).unwrap();
        let samples = parse_measurements(m_csv.as_slice(), s.m_beams())
            .unwrap()
            .samples;
        for smp in &samples {
            let bs = bss.iter().find(|b| b.bs_id == smp.bs_id).unwrap();
            for (a, b) in smp.rsrp.iter().zip(recompute(&s, bs, smp)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn noiseless_targets_are_additively_separable() {
        let s = SyntheticScenario::default();
        let (bss, samples) = generate_dataset(&s, 3, 30, 2).unwrap();
        for smp in &samples {
            let bs = bss.iter().find(|b| b.bs_id == smp.bs_id).unwrap();
            let cf = compress(bs, &smp.point).unwrap();
            let p_t = bs.ssb_tx_power().unwrap();
            let f1 = s.beam_gains(&cf);
            let f2 = s.alpha * cf.distance.log10() + s.const_offset;
            let f3 = s.beta * cf.carrier_frequency.log10();
            for (m, g) in f1.iter().enumerate() {
                let y = smp.rsrp[m + 1] - p_t;
                assert!((y - (g + f2 + f3)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn values_fall_in_a_plausible_range() {
        let s = SyntheticScenario::default();
        let (_, samples) = generate_dataset(&s, 20, 100, 5).unwrap();
        let ss: Vec<f64> = samples.iter().map(|x| x.rsrp[0]).collect();
        let lo = ss.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo > -140.0 && hi < -40.0, "SS-RSRP range [{lo}, {hi}]");
    }

    #[test]
    fn families_differ_across_categories() {
        let s = SyntheticScenario::default();
        let a = s.beam_family("AAU5613", "SCENARIO_0");
        let b = s.beam_family("AAU3971", "SCENARIO_0");
        let c = s.beam_family("AAU5613", "SCENARIO_21");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn scenario_config_round_trips_through_toml() {
        let s = SyntheticScenario {
            noise_std: 2.0,
            ..Default::default()
        };
        let text = s.to_toml_string();
        assert_eq!(SyntheticScenario::from_toml_str(&text).unwrap(), s);
        let bad = text.replace("rx_gain = 0.0", "rx_gain = 3.0");
        assert!(SyntheticScenario::from_toml_str(&bad).is_err());
    }

    #[test]
    fn gain_is_bounded_and_peaks_at_pointing() {
        let b = beam();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let g = synthetic_gain(
                &b,
                rng.random_range(-180.0..180.0),
                rng.random_range(-90.0..90.0),
            );
            assert!(g <= b.max_gain && g >= b.max_gain - b.attenuation_floor);
        }
    }
}
