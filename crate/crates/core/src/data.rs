//! BS-parameter and measurement tables, and BS-level splits.
//!
//! Both tables are headered UTF-8 CSV. Floats are written with Rust's
//! shortest round-trip formatting so a parse/serialize cycle is value-exact.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    parse_channels, AdditivePower, BeamOrientation, BeamStatic, BsLocation, SamplePoint,
};

pub const BS_COLUMNS: [&str; 15] = [
    "bs_id",
    "longitude",
    "latitude",
    "antenna_height_m",
    "aau_type",
    "num_channels",
    "coverage_scenario",
    "carrier_frequency_mhz",
    "horizontal_azimuth_deg",
    "beam_azimuth_deg",
    "mech_tilt_deg",
    "digital_tilt_deg",
    "total_tx_power_dbm",
    "bandwidth",
    "sigma",
];

/// One base station's operational parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsRecord {
    pub bs_id: String,
    pub location: BsLocation,
    pub static_params: BeamStatic,
    pub orientation: BeamOrientation,
    pub power: AdditivePower,
}

impl BsRecord {
    pub fn validate(&self) -> Result<()> {
        self.location.validate()?;
        self.static_params.validate()?;
        self.orientation.validate()?;
        crate::geo::ssb_tx_power(&self.power).map(|_| ())
    }

    pub fn ssb_tx_power(&self) -> Result<f64> {
        crate::geo::ssb_tx_power(&self.power)
    }
}

/// One spatial point with its SS-RSRP and per-beam SSB-RSRP values.
///
/// Index 0 of `rsrp` is the SS-RSRP; indices 1..=M are the beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub bs_id: String,
    pub point: SamplePoint,
    pub rsrp: Vec<f64>,
    pub observed: Vec<bool>,
}

impl MeasurementSample {
    pub fn m_beams(&self) -> usize {
        self.rsrp.len() - 1
    }

    /// True when the recorded SS-RSRP is below some observed beam value.
    pub fn ss_below_beam_max(&self) -> bool {
        if !self.observed[0] {
            return false;
        }
        self.rsrp
            .iter()
            .zip(&self.observed)
            .skip(1)
            .any(|(v, &o)| o && *v > self.rsrp[0])
    }
}

/// SSB utilization lookup keyed by (carrier frequency, bandwidth). Missing
/// keys fall back to 1.0, i.e. no correction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaTable {
    #[serde(default)]
    pub entries: Vec<SigmaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEntry {
    pub carrier_frequency_mhz: f64,
    pub bandwidth: f64,
    pub sigma: f64,
}

impl SigmaTable {
    pub fn lookup(&self, carrier_frequency: f64, bandwidth: f64) -> f64 {
        self.entries
            .iter()
            .find(|e| e.carrier_frequency_mhz == carrier_frequency && e.bandwidth == bandwidth)
            .map_or(1.0, |e| e.sigma)
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: &HashMap<&str, usize>, name: &str) -> &'a str {
    idx.get(name).and_then(|&i| rec.get(i)).unwrap_or("").trim()
}

fn num(rec: &csv::StringRecord, idx: &HashMap<&str, usize>, name: &str, row: usize) -> Result<f64> {
    let raw = field(rec, idx, name);
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("column {name}: cannot parse {raw:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            msg: format!("column {name}: non-finite value"),
        });
    }
    Ok(v)
}

fn header_index(headers: &csv::StringRecord) -> HashMap<&str, usize> {
    headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect()
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(r)
}

/// Parse a BS table. Rows with an empty `sigma` cell take their value from
/// `sigma_table`.
pub fn parse_bs_table<R: Read>(input: R, sigma_table: &SigmaTable) -> Result<Vec<BsRecord>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Ok(Vec::new());
    }
    let idx = header_index(&headers);
    for col in &BS_COLUMNS[..14] {
        if !idx.contains_key(col) {
            return Err(Error::Parse {
                row: 0,
                msg: format!("missing column {col}"),
            });
        }
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let bs_id = field(&rec, &idx, "bs_id").to_string();
        if bs_id.is_empty() {
            return Err(Error::Parse {
                row,
                msg: "empty bs_id".into(),
            });
        }
        let carrier_frequency = num(&rec, &idx, "carrier_frequency_mhz", row)?;
        let bandwidth = num(&rec, &idx, "bandwidth", row)?;
        let sigma = match field(&rec, &idx, "sigma") {
            "" => sigma_table.lookup(carrier_frequency, bandwidth),
            _ => num(&rec, &idx, "sigma", row)?,
        };
        let record = BsRecord {
            location: BsLocation {
                longitude: num(&rec, &idx, "longitude", row)?,
                latitude: num(&rec, &idx, "latitude", row)?,
                antenna_height: num(&rec, &idx, "antenna_height_m", row)?,
            },
            static_params: BeamStatic {
                aau_type: field(&rec, &idx, "aau_type").to_string(),
                num_channels: parse_channels(field(&rec, &idx, "num_channels")).map_err(|e| {
                    Error::Parse {
                        row,
                        msg: e.to_string(),
                    }
                })?,
                coverage_scenario: field(&rec, &idx, "coverage_scenario").to_string(),
                carrier_frequency,
            },
            orientation: BeamOrientation {
                horizontal_azimuth: num(&rec, &idx, "horizontal_azimuth_deg", row)?,
                beam_azimuth: num(&rec, &idx, "beam_azimuth_deg", row)?,
                mechanical_down_tilt: num(&rec, &idx, "mech_tilt_deg", row)?,
                digital_down_tilt: num(&rec, &idx, "digital_tilt_deg", row)?,
            },
            power: AdditivePower {
                total_tx_power: num(&rec, &idx, "total_tx_power_dbm", row)?,
                bandwidth,
                ssb_utilization_sigma: sigma,
            },
            bs_id,
        };
        record.validate().map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if !seen.insert(record.bs_id.clone()) {
            return Err(Error::Integrity(format!(
                "duplicate bs_id {}",
                record.bs_id
            )));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_bs_table<W: Write>(out: W, records: &[BsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(BS_COLUMNS).map_err(fmt)?;
    for r in records {
        w.write_record([
            r.bs_id.clone(),
            r.location.longitude.to_string(),
            r.location.latitude.to_string(),
            r.location.antenna_height.to_string(),
            r.static_params.aau_type.clone(),
            r.static_params.num_channels.to_string(),
            r.static_params.coverage_scenario.clone(),
            r.static_params.carrier_frequency.to_string(),
            r.orientation.horizontal_azimuth.to_string(),
            r.orientation.beam_azimuth.to_string(),
            r.orientation.mechanical_down_tilt.to_string(),
            r.orientation.digital_down_tilt.to_string(),
            r.power.total_tx_power.to_string(),
            r.power.bandwidth.to_string(),
            r.power.ssb_utilization_sigma.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Parsed measurement rows plus the rows whose SS-RSRP fell below a beam value.
#[derive(Debug, Clone, Default)]
pub struct MeasurementTable {
    pub samples: Vec<MeasurementSample>,
    pub inconsistent_rows: Vec<usize>,
}

pub fn measurement_columns(m_beams: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "bs_id",
        "longitude",
        "latitude",
        "altitude_m",
        "ss_rsrp_dbm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=m_beams).map(|m| format!("ssb{m}_rsrp_dbm")));
    cols
}

pub fn parse_measurements<R: Read>(input: R, m_beams: usize) -> Result<MeasurementTable> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Ok(MeasurementTable::default());
    }
    let idx = header_index(&headers);
    let cols = measurement_columns(m_beams);
    for col in &cols {
        if !idx.contains_key(col.as_str()) {
            return Err(Error::Parse {
                row: 0,
                msg: format!("missing column {col}"),
            });
        }
    }

    let mut table = MeasurementTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let point = SamplePoint {
            longitude: num(&rec, &idx, "longitude", row)?,
            latitude: num(&rec, &idx, "latitude", row)?,
            altitude: num(&rec, &idx, "altitude_m", row)?,
        };
        point.validate().map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let mut rsrp = Vec::with_capacity(m_beams + 1);
        let mut observed = Vec::with_capacity(m_beams + 1);
        for col in &cols[4..] {
            if field(&rec, &idx, col).is_empty() {
                rsrp.push(f64::NAN);
                observed.push(false);
            } else {
                rsrp.push(num(&rec, &idx, col, row)?);
                observed.push(true);
            }
        }
        if !observed.iter().any(|&o| o) {
            return Err(Error::Parse {
                row,
                msg: "no observed RSRP values".into(),
            });
        }
        let sample = MeasurementSample {
            bs_id: field(&rec, &idx, "bs_id").to_string(),
            point,
            rsrp,
            observed,
        };
        if sample.ss_below_beam_max() {
            log::warn!("row {row}: SS-RSRP below the strongest SSB-RSRP");
            table.inconsistent_rows.push(row);
        }
        table.samples.push(sample);
    }
    Ok(table)
}

pub fn write_measurements<W: Write>(
    out: W,
    samples: &[MeasurementSample],
    m_beams: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(measurement_columns(m_beams)).map_err(fmt)?;
    for s in samples {
        if s.rsrp.len() != m_beams + 1 {
            return Err(Error::Shape {
                expected: m_beams + 1,
                got: s.rsrp.len(),
            });
        }
        let mut row = vec![
            s.bs_id.clone(),
            s.point.longitude.to_string(),
            s.point.latitude.to_string(),
            s.point.altitude.to_string(),
        ];
        row.extend(s.rsrp.iter().zip(&s.observed).map(|(v, &o)| {
            if o {
                v.to_string()
            } else {
                String::new()
            }
        }));
        w.write_record(row).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_bs_file(path: &Path, sigma_table: &SigmaTable) -> Result<Vec<BsRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_bs_table(f, sigma_table)
}

pub fn read_measurement_file(path: &Path, m_beams: usize) -> Result<MeasurementTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(f, m_beams)
}

/// Keep samples whose bs_id has a BS record; returns the kept samples and
/// the number dropped.
pub fn join_samples(
    bss: &[BsRecord],
    samples: Vec<MeasurementSample>,
) -> (Vec<MeasurementSample>, usize) {
    let ids: HashSet<&str> = bss.iter().map(|b| b.bs_id.as_str()).collect();
    let before = samples.len();
    let kept: Vec<_> = samples
        .into_iter()
        .filter(|s| ids.contains(s.bs_id.as_str()))
        .collect();
    let dropped = before - kept.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} samples with no matching BS record");
    }
    (kept, dropped)
}

/// Fraction of BSs sent to validation.
pub const VAL_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub sampling_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

pub fn split_sizes(n: usize, sampling_rate: f64) -> Result<(usize, usize, usize)> {
    if !(sampling_rate > 0.0 && sampling_rate < 0.9) {
        return Err(Error::InvalidSplit(format!(
            "sampling rate {sampling_rate} outside (0, 0.9)"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidSplit(format!(
            "need at least 3 BSs, have {n}"
        )));
    }
    let n_train = round_half_up(sampling_rate * n as f64);
    if n_train == 0 {
        return Err(Error::InvalidSplit(format!(
            "rate {sampling_rate} of {n} BSs leaves an empty training set"
        )));
    }
    let n_val = round_half_up(VAL_FRACTION * n as f64).max(1);
    if n_train + n_val >= n {
        return Err(Error::InvalidSplit(format!(
            "rate {sampling_rate} of {n} BSs leaves an empty test set"
        )));
    }
    Ok((n_train, n_val, n - n_train - n_val))
}

/// Seeded shuffle of BS ids into train/validation/test.
pub fn split_by_bs(bss: &[BsRecord], spec: SplitSpec) -> Result<BsSplit> {
    let (n_train, n_val, _) = split_sizes(bss.len(), spec.sampling_rate)?;
    let mut ids: Vec<String> = bss.iter().map(|b| b.bs_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(BsSplit {
        train: ids,
        val,
        test,
    })
}

/// Samples belonging to the given BS ids, in table order.
pub fn samples_for<'a>(
    samples: &'a [MeasurementSample],
    ids: &[String],
) -> Vec<&'a MeasurementSample> {
    let set: HashSet<&str> = ids.iter().map(String::as_str).collect();
    samples
        .iter()
        .filter(|s| set.contains(s.bs_id.as_str()))
        .collect()
}
