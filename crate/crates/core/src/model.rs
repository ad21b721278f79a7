//! The disentangled predictor, its ablation benchmarks, and the wrong-input
//! variants.
//!
//! Every variant is a [`FusedMlp`]: a list of subnets, each reading a subset
//! of the input fields, with outputs summed into the `M + 1` RSRP heads.
//!
//! | variant    | subnet inputs                                              | hidden layers |
//! |------------|------------------------------------------------------------|---------------|
//! | proposed   | `{D}`, `{f}`, `{Δθh, Δθv, static}`                         | 5 each        |
//! | benchmark2 | `{Δθh, Δθv, D, f, static}`                                 | 6             |
//! | benchmark3 | raw parameters and ENU offset                              | 6             |
//! | wrong1     | `{D}`, `{Δθh}`, `{f, Δθv, static}`                         | 5 each        |
//! | wrong2     | `{Δθh}`, `{f}`, `{D, Δθv, static}`                         | 5 each        |
//! | wrong3     | `{Δθh}`, `{Δθv}`, `{D, f, static}`                         | 5 each        |
//!
//! `static` is the one-hot AAU type (unless excluded), the standardized
//! channel count, and the one-hot coverage scenario. All variants except
//! benchmark3 regress `y = p − p_T`; benchmark3 regresses `p` directly from
//! the raw parameters, power included.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{BsRecord, MeasurementSample};
use crate::error::{Error, Result};
use crate::geo::{compress, enu_offset, CompressedFeatures, SamplePoint};
use crate::nnet::{train, FusedMlp, LossHistory, Mlp, MlpFile, MlpSpec, TrainConfig, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantTag {
    Proposed,
    Benchmark2,
    Benchmark3,
    Wrong1,
    Wrong2,
    Wrong3,
}

impl VariantTag {
    pub const ALL: [VariantTag; 6] = [
        VariantTag::Proposed,
        VariantTag::Benchmark2,
        VariantTag::Benchmark3,
        VariantTag::Wrong1,
        VariantTag::Wrong2,
        VariantTag::Wrong3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::Proposed => "proposed",
            VariantTag::Benchmark2 => "benchmark2",
            VariantTag::Benchmark3 => "benchmark3",
            VariantTag::Wrong1 => "wrong1",
            VariantTag::Wrong2 => "wrong2",
            VariantTag::Wrong3 => "wrong3",
        }
    }

    /// Input fields of each subnet.
    pub fn layout(self) -> Vec<Vec<Field>> {
        use Field::*;
        match self {
            VariantTag::Proposed => vec![
                vec![Distance],
                vec![Frequency],
                vec![DeltaH, DeltaV, Static],
            ],
            VariantTag::Benchmark2 => vec![vec![DeltaH, DeltaV, Distance, Frequency, Static]],
            VariantTag::Benchmark3 => vec![vec![Raw]],
            VariantTag::Wrong1 => vec![
                vec![Distance],
                vec![DeltaH],
                vec![Frequency, DeltaV, Static],
            ],
            VariantTag::Wrong2 => vec![
                vec![DeltaH],
                vec![Frequency],
                vec![Distance, DeltaV, Static],
            ],
            VariantTag::Wrong3 => vec![
                vec![DeltaH],
                vec![DeltaV],
                vec![Distance, Frequency, Static],
            ],
        }
    }

    pub fn is_disentangled(self) -> bool {
        !matches!(self, VariantTag::Benchmark2 | VariantTag::Benchmark3)
    }

    pub fn target_mode(self) -> TargetMode {
        match self {
            VariantTag::Benchmark3 => TargetMode::Absolute,
            _ => TargetMode::RelativeToTxPower,
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantTag::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    DeltaH,
    DeltaV,
    Distance,
    Frequency,
    Static,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// `y = p − p_T`.
    RelativeToTxPower,
    Absolute,
}

/// Numeric columns available to the encoders, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
enum Col {
    DeltaH,
    DeltaV,
    Distance,
    Frequency,
    Channels,
    HorizontalAzimuth,
    BeamAzimuth,
    MechTilt,
    DigitalTilt,
    TotalPower,
    Bandwidth,
    East,
    North,
    Up,
}

const N_COLS: usize = 14;
const RAW_COLS: [Col; 11] = [
    Col::Frequency,
    Col::HorizontalAzimuth,
    Col::BeamAzimuth,
    Col::MechTilt,
    Col::DigitalTilt,
    Col::TotalPower,
    Col::Bandwidth,
    Col::East,
    Col::North,
    Col::Up,
    Col::Channels,
];

/// One sample with every feature any variant may need, computed once.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub bs_id: String,
    pub compressed: CompressedFeatures,
    numeric: [f64; N_COLS],
    pub p_t: f64,
    pub rsrp: Vec<f64>,
    pub observed: Vec<bool>,
}

impl PreparedSample {
    pub fn from_point(bs: &BsRecord, pt: &SamplePoint) -> Result<Self> {
        let cf = compress(bs, pt)?;
        let enu = enu_offset(&bs.location, pt)?;
        let o = &bs.orientation;
        let numeric = [
            cf.delta_theta_h,
            cf.delta_theta_v,
            cf.distance,
            cf.carrier_frequency,
            bs.static_params.num_channels as f64,
            o.horizontal_azimuth,
            o.beam_azimuth,
            o.mechanical_down_tilt,
            o.digital_down_tilt,
            bs.power.total_tx_power,
            bs.power.bandwidth,
            enu.east,
            enu.north,
            enu.up,
        ];
        Ok(PreparedSample {
            bs_id: bs.bs_id.clone(),
            compressed: cf,
            numeric,
            p_t: bs.ssb_tx_power()?,
            rsrp: Vec::new(),
            observed: Vec::new(),
        })
    }

    pub fn from_measurement(bs: &BsRecord, s: &MeasurementSample) -> Result<Self> {
        let mut p = Self::from_point(bs, &s.point)?;
        p.rsrp = s.rsrp.clone();
        p.observed = s.observed.clone();
        Ok(p)
    }

    fn col(&self, c: Col) -> f64 {
        self.numeric[c as usize]
    }
}

/// Prepare every sample that has a BS record. Samples without one, or with
/// degenerate geometry, are skipped and counted.
pub fn prepare_all(
    bss: &[BsRecord],
    samples: &[MeasurementSample],
) -> (Vec<PreparedSample>, usize) {
    let by_id: std::collections::HashMap<&str, &BsRecord> =
        bss.iter().map(|b| (b.bs_id.as_str(), b)).collect();
    let mut out = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for s in samples {
        match by_id
            .get(s.bs_id.as_str())
            .map(|bs| PreparedSample::from_measurement(bs, s))
        {
            Some(Ok(p)) => out.push(p),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} samples without a usable BS record");
    }
    (out, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// A column with (near-)zero spread is scaled by `fallback(mean)`.
    fn fit(values: impl Iterator<Item = f64>, fallback: fn(f64) -> f64) -> Self {
        let values: Vec<f64> = values.collect();
        if values.is_empty() {
            return Standardizer {
                mean: 0.0,
                std: 1.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Standardizer {
            mean,
            std: if std > 1e-12 * mean.abs().max(1.0) {
                std
            } else {
                fallback(mean)
            },
        }
    }

    /// Inputs constant over the training split: deviations are measured
    /// relative to the training value, so unseen values stay O(1).
    fn fit_input(values: impl Iterator<Item = f64>) -> Self {
        Self::fit(values, |mean| mean.abs().max(1.0))
    }

    fn fit_target(values: impl Iterator<Item = f64>) -> Self {
        Self::fit(values, |_| 1.0)
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// One-hot vocabularies and standardization constants fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub exclude_aau: bool,
    pub target_mode: TargetMode,
    pub aau_vocab: Vec<String>,
    pub scenario_vocab: Vec<String>,
    numeric: Vec<Standardizer>,
    targets: Vec<Standardizer>,
    fitted: bool,
}

impl FeatureEncoding {
    pub fn unfitted(exclude_aau: bool, target_mode: TargetMode) -> Self {
        FeatureEncoding {
            exclude_aau,
            target_mode,
            aau_vocab: Vec::new(),
            scenario_vocab: Vec::new(),
            numeric: Vec::new(),
            targets: Vec::new(),
            fitted: false,
        }
    }

    pub fn fit(
        samples: &[&PreparedSample],
        m_beams: usize,
        exclude_aau: bool,
        target_mode: TargetMode,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("cannot fit an encoding on no samples"));
        }
        let mut aau_vocab: Vec<String> = Vec::new();
        let mut scenario_vocab: Vec<String> = Vec::new();
        for s in samples {
            let st = &s.compressed.beam_static;
            if !exclude_aau && !aau_vocab.contains(&st.aau_type) {
                aau_vocab.push(st.aau_type.clone());
            }
            if !scenario_vocab.contains(&st.coverage_scenario) {
                scenario_vocab.push(st.coverage_scenario.clone());
            }
        }
        aau_vocab.sort();
        scenario_vocab.sort();
        let numeric = (0..N_COLS)
            .map(|c| Standardizer::fit_input(samples.iter().map(|s| s.numeric[c])))
            .collect();
        let mut enc = FeatureEncoding {
            exclude_aau,
            target_mode,
            aau_vocab,
            scenario_vocab,
            numeric,
            targets: Vec::new(),
            fitted: true,
        };
        enc.targets = (0..=m_beams)
            .map(|m| {
                Standardizer::fit_target(samples.iter().filter_map(|s| {
                    match (s.observed.get(m), s.rsrp.get(m)) {
                        (Some(true), Some(v)) => Some(enc.raw_target(s, *v)),
                        _ => None,
                    }
                }))
            })
            .collect();
        Ok(enc)
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn require_fitted(&self) -> Result<()> {
        if self.fitted {
            Ok(())
        } else {
            Err(Error::State("feature encoding has not been fitted".into()))
        }
    }

    fn raw_target(&self, s: &PreparedSample, p: f64) -> f64 {
        match self.target_mode {
            TargetMode::RelativeToTxPower => p - s.p_t,
            TargetMode::Absolute => p,
        }
    }

    pub fn target_standardizers(&self) -> &[Standardizer] {
        &self.targets
    }

    fn z(&self, s: &PreparedSample, c: Col) -> f64 {
        self.numeric[c as usize].apply(s.col(c))
    }

    fn one_hot(vocab: &[String], label: &str, out: &mut Vec<f64>) {
        out.extend(vocab.iter().map(|v| if v == label { 1.0 } else { 0.0 }));
    }

    pub fn field_width(&self, f: Field) -> usize {
        let static_width = self.aau_vocab.len() + 1 + self.scenario_vocab.len();
        match f {
            Field::DeltaH | Field::DeltaV | Field::Distance | Field::Frequency => 1,
            Field::Static => static_width,
            Field::Raw => static_width + RAW_COLS.len() - 1,
        }
    }

    fn push_static(&self, s: &PreparedSample, out: &mut Vec<f64>) {
        let st = &s.compressed.beam_static;
        if !self.exclude_aau {
            Self::one_hot(&self.aau_vocab, &st.aau_type, out);
        }
        out.push(self.z(s, Col::Channels));
        Self::one_hot(&self.scenario_vocab, &st.coverage_scenario, out);
    }

    fn push_field(&self, s: &PreparedSample, f: Field, out: &mut Vec<f64>) {
        match f {
            Field::DeltaH => out.push(self.z(s, Col::DeltaH)),
            Field::DeltaV => out.push(self.z(s, Col::DeltaV)),
            Field::Distance => out.push(self.z(s, Col::Distance)),
            Field::Frequency => out.push(self.z(s, Col::Frequency)),
            Field::Static => self.push_static(s, out),
            Field::Raw => {
                self.push_static(s, out);
                out.extend(RAW_COLS[..RAW_COLS.len() - 1].iter().map(|&c| self.z(s, c)));
            }
        }
    }

    /// Encoded input matrix for one subnet.
    pub fn encode(&self, samples: &[&PreparedSample], fields: &[Field]) -> Result<Array2<f64>> {
        self.require_fitted()?;
        let width: usize = fields.iter().map(|&f| self.field_width(f)).sum();
        let mut flat = Vec::with_capacity(samples.len() * width);
        for s in samples {
            for &f in fields {
                self.push_field(s, f, &mut flat);
            }
        }
        Ok(Array2::from_shape_vec((samples.len(), width), flat).expect("encoded width"))
    }

    /// Standardized targets and the 0/1 observation mask.
    pub fn encode_targets(
        &self,
        samples: &[&PreparedSample],
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        self.require_fitted()?;
        let k = self.targets.len();
        let mut y = Array2::zeros((samples.len(), k));
        let mut mask = Array2::zeros((samples.len(), k));
        for (i, s) in samples.iter().enumerate() {
            if s.rsrp.len() != k {
                return Err(Error::Shape {
                    expected: k,
                    got: s.rsrp.len(),
                });
            }
            for m in 0..k {
                if s.observed[m] {
                    y[[i, m]] = self.targets[m].apply(self.raw_target(s, s.rsrp[m]));
                    mask[[i, m]] = 1.0;
                }
            }
        }
        Ok((y, mask))
    }

    /// Map a standardized network output back to dBm.
    pub fn decode(&self, s: &PreparedSample, yhat: &[f64]) -> Vec<f64> {
        yhat.iter()
            .zip(&self.targets)
            .map(|(z, st)| {
                let y = st.invert(*z);
                match self.target_mode {
                    TargetMode::RelativeToTxPower => y + s.p_t,
                    TargetMode::Absolute => y,
                }
            })
            .collect()
    }
}

/// Subnet width and depths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden_width: usize,
    /// Hidden layers in each subnet of a disentangled variant.
    pub subnet_layers: usize,
    /// Hidden layers of the single-MLP benchmarks.
    pub single_layers: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden_width: 256,
            subnet_layers: 5,
            single_layers: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledModel {
    pub variant: VariantTag,
    pub m_beams: usize,
    pub encoding: FeatureEncoding,
    pub net: FusedMlp,
}

pub fn build_variant(
    tag: VariantTag,
    m_beams: usize,
    encoding: FeatureEncoding,
    arch: &Architecture,
    seed: u64,
) -> Result<DisentangledModel> {
    encoding.require_fitted()?;
    if encoding.target_mode != tag.target_mode() {
        return Err(Error::invalid(format!(
            "{tag} needs target mode {:?}",
            tag.target_mode()
        )));
    }
    if m_beams == 0 {
        return Err(Error::invalid("m_beams must be at least 1"));
    }
    let depth = if tag.is_disentangled() {
        arch.subnet_layers
    } else {
        arch.single_layers
    };
    let members = tag
        .layout()
        .iter()
        .enumerate()
        .map(|(k, fields)| {
            let input_dim = fields.iter().map(|&f| encoding.field_width(f)).sum();
            let spec = MlpSpec::new(input_dim, depth, arch.hidden_width, m_beams + 1);
            Mlp::init(
                spec,
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(k as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisentangledModel {
        variant: tag,
        m_beams,
        encoding,
        net: FusedMlp::new(members)?,
    })
}

impl DisentangledModel {
    pub fn subnet_inputs(&self, samples: &[&PreparedSample]) -> Result<Vec<Array2<f64>>> {
        self.variant
            .layout()
            .iter()
            .map(|fields| self.encoding.encode(samples, fields))
            .collect()
    }

    pub fn training_set(&self, samples: &[&PreparedSample]) -> Result<TrainingSet> {
        let (targets, mask) = self.encoding.encode_targets(samples)?;
        Ok(TrainingSet {
            inputs: self.subnet_inputs(samples)?,
            targets,
            mask,
        })
    }

    /// Standardized fused output: the elementwise sum of every subnet's output.
    pub fn forward_fused(&self, cf: &CompressedFeatures) -> Result<Vec<f64>> {
        self.encoding.require_fitted()?;
        if self.variant == VariantTag::Benchmark3 {
            return Err(Error::State(
                "benchmark3 reads raw parameters, not compressed features".into(),
            ));
        }
        let sample = PreparedSample {
            bs_id: String::new(),
            compressed: cf.clone(),
            numeric: {
                let mut n = [0.0; N_COLS];
                n[Col::DeltaH as usize] = cf.delta_theta_h;
                n[Col::DeltaV as usize] = cf.delta_theta_v;
                n[Col::Distance as usize] = cf.distance;
                n[Col::Frequency as usize] = cf.carrier_frequency;
                n[Col::Channels as usize] = cf.beam_static.num_channels as f64;
                n
            },
            p_t: 0.0,
            rsrp: Vec::new(),
            observed: Vec::new(),
        };
        let out = self.forward_prepared(&[&sample])?;
        Ok(out.row(0).to_vec())
    }

    /// Per-subnet outputs, in layout order.
    pub fn subnet_outputs(&self, samples: &[&PreparedSample]) -> Result<Vec<Array2<f64>>> {
        let inputs = self.subnet_inputs(samples)?;
        self.net
            .members
            .iter()
            .zip(&inputs)
            .map(|(m, x)| m.forward_batch(x.view()))
            .collect()
    }

    /// Standardized fused outputs for a batch.
    pub fn forward_prepared(&self, samples: &[&PreparedSample]) -> Result<Array2<f64>> {
        let inputs = self.subnet_inputs(samples)?;
        let views: Vec<ArrayView2<f64>> = inputs.iter().map(|x| x.view()).collect();
        self.net.forward_batch(&views)
    }

    /// Predicted RSRP in dBm, one row per sample.
    pub fn predict_prepared(&self, samples: &[&PreparedSample]) -> Result<Vec<Vec<f64>>> {
        let out = self.forward_prepared(samples)?;
        Ok(samples
            .iter()
            .zip(out.outer_iter())
            .map(|(s, row)| {
                self.encoding
                    .decode(s, row.as_slice().expect("standard layout"))
            })
            .collect())
    }

    pub fn predict_rsrp(&self, bs: &BsRecord, pt: &SamplePoint) -> Result<Vec<f64>> {
        let s = PreparedSample::from_point(bs, pt)?;
        Ok(self.predict_prepared(&[&s])?.remove(0))
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn to_json(&self) -> String {
        let bundle = ModelBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            variant: self.variant,
            m_beams: self.m_beams,
            encoding: self.encoding.clone(),
            subnets: self.net.members.iter().map(MlpFile::from).collect(),
        };
        serde_json::to_string_pretty(&bundle).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: ModelBundle =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model bundle: {e}")))?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle {} v{}",
                b.format, b.version
            )));
        }
        b.encoding.require_fitted()?;
        let members = b
            .subnets
            .into_iter()
            .map(Mlp::try_from)
            .collect::<Result<Vec<_>>>()?;
        let layout = b.variant.layout();
        if members.len() != layout.len() {
            return Err(Error::Format(
                "subnet count does not match the variant".into(),
            ));
        }
        for (m, fields) in members.iter().zip(&layout) {
            let want: usize = fields.iter().map(|&f| b.encoding.field_width(f)).sum();
            if m.spec().input_dim != want || m.spec().output_dim != b.m_beams + 1 {
                return Err(Error::Format(
                    "subnet shape does not match the encoding".into(),
                ));
            }
        }
        Ok(DisentangledModel {
            variant: b.variant,
            m_beams: b.m_beams,
            encoding: b.encoding,
            net: FusedMlp::new(members)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const BUNDLE_FORMAT: &str = "covpred-model";
const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelBundle {
    format: String,
    version: u32,
    variant: VariantTag,
    m_beams: usize,
    encoding: FeatureEncoding,
    subnets: Vec<MlpFile>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub exclude_aau: bool,
}

/// Fit the encoding on `train_samples`, build the variant, and train it.
pub fn fit_variant(
    tag: VariantTag,
    m_beams: usize,
    train_samples: &[&PreparedSample],
    val_samples: &[&PreparedSample],
    cfg: &FitConfig,
) -> Result<(DisentangledModel, LossHistory)> {
    let encoding =
        FeatureEncoding::fit(train_samples, m_beams, cfg.exclude_aau, tag.target_mode())?;
    let model = build_variant(tag, m_beams, encoding, &cfg.arch, cfg.train.seed)?;
    let train_set = model.training_set(train_samples)?;
    let val_set = model.training_set(val_samples)?;
    let (net, history) = train(model.net.clone(), &train_set, &val_set, &cfg.train)?;
    Ok((DisentangledModel { net, ..model }, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SyntheticScenario};

    fn small_arch() -> Architecture {
        Architecture {
            hidden_width: 8,
            subnet_layers: 2,
            single_layers: 3,
        }
    }

    fn dataset() -> (Vec<BsRecord>, Vec<PreparedSample>) {
        let s = SyntheticScenario::default();
        let (bss, samples) = generate_dataset(&s, 8, 20, 4).unwrap();
        let (prep, skipped) = prepare_all(&bss, &samples);
        assert_eq!(skipped, 0);
        (bss, prep)
    }

    fn fitted(
        tag: VariantTag,
        exclude_aau: bool,
    ) -> (Vec<BsRecord>, Vec<PreparedSample>, DisentangledModel) {
        let (bss, prep) = dataset();
        let refs: Vec<_> = prep.iter().collect();
        let enc = FeatureEncoding::fit(&refs, 8, exclude_aau, tag.target_mode()).unwrap();
        let model = build_variant(tag, 8, enc, &small_arch(), 1).unwrap();
        (bss, prep, model)
    }

    #[test]
    fn parse_tags() {
        for tag in VariantTag::ALL {
            assert_eq!(tag.as_str().parse::<VariantTag>().unwrap(), tag);
        }
        assert!("wrong4".parse::<VariantTag>().is_err());
    }

    #[test]
    fn proposed_has_three_heads_of_m_plus_one() {
        let (_, _, m) = fitted(VariantTag::Proposed, false);
        assert_eq!(m.net.members.len(), 3);
        assert!(m.net.members.iter().all(|s| s.spec().output_dim == 9));
        assert!(m.net.members.iter().all(|s| s.spec().hidden_layers == 2));
    }

    #[test]
    fn benchmark2_input_width() {
        let (_, _, m) = fitted(VariantTag::Benchmark2, false);
        let e = &m.encoding;
        assert_eq!(m.net.members.len(), 1);
        assert_eq!(
            m.net.members[0].spec().input_dim,
            4 + e.aau_vocab.len() + e.scenario_vocab.len() + 1
        );
        assert_eq!(m.net.members[0].spec().hidden_layers, 3);
    }

    #[test]
    fn wrong1_layout_matches_its_definition() {
        use Field::*;
        assert_eq!(
            VariantTag::Wrong1.layout(),
            vec![
                vec![Distance],
                vec![DeltaH],
                vec![Frequency, DeltaV, Static]
            ]
        );
        let (_, _, m) = fitted(VariantTag::Wrong1, false);
        let static_w = m.encoding.field_width(Static);
        let dims: Vec<_> = m.net.members.iter().map(|s| s.spec().input_dim).collect();
        assert_eq!(dims, vec![1, 1, 2 + static_w]);
    }

    #[test]
    fn unfitted_encoding_is_a_state_error() {
        let enc = FeatureEncoding::unfitted(false, TargetMode::RelativeToTxPower);
        assert!(matches!(
            build_variant(VariantTag::Proposed, 8, enc, &small_arch(), 0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn fused_output_is_the_sum_of_subnets() {
        let (_, prep, m) = fitted(VariantTag::Proposed, false);
        let refs: Vec<_> = prep.iter().take(10).collect();
        let fused = m.forward_prepared(&refs).unwrap();
        let parts = m.subnet_outputs(&refs).unwrap();
        for i in 0..refs.len() {
            for j in 0..9 {
                let sum = parts[0][[i, j]] + parts[1][[i, j]] + parts[2][[i, j]];
                assert!((fused[[i, j]] - sum).abs() < 1e-12);
            }
            let single = m.forward_fused(&refs[i].compressed).unwrap();
            for j in 0..9 {
                assert!((single[j] - fused[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_distance_net_ignores_distance() {
        let (_, prep, mut m) = fitted(VariantTag::Proposed, false);
        for l in m.net.members[0].layers_mut() {
            l.w.fill(0.0);
        }
        let mut cf = prep[0].compressed.clone();
        let a = m.forward_fused(&cf).unwrap();
        cf.distance *= 3.7;
        assert_eq!(a, m.forward_fused(&cf).unwrap());
    }

    #[test]
    fn subnets_receive_identical_output_gradients() {
        let (_, prep, m) = fitted(VariantTag::Proposed, false);
        let refs: Vec<_> = prep.iter().take(16).collect();
        let set = m.training_set(&refs).unwrap();
        // perturb only the final bias of each subnet: its gradient is the
        // column sum of dL/dŷ, so all three must agree
        let (_, grads) = m.net.loss_and_grads(&set).unwrap();
        let last = |k: usize| grads[k].layers.last().unwrap().b.clone();
        assert_eq!(last(0), last(1));
        assert_eq!(last(1), last(2));
    }

    #[test]
    fn tx_power_shift_moves_every_head() {
        let (bss, prep, m) = fitted(VariantTag::Proposed, false);
        let bs = bss.iter().find(|b| b.bs_id == prep[0].bs_id).unwrap();
        let pt = SamplePoint {
            longitude: bs.location.longitude + 0.005,
            latitude: bs.location.latitude + 0.003,
            altitude: 300.0,
        };
        let base = m.predict_rsrp(bs, &pt).unwrap();
        let mut louder = bs.clone();
        louder.power.total_tx_power += 3.0;
        let shifted = m.predict_rsrp(&louder, &pt).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            assert!((b - a - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn excluding_aau_makes_predictions_aau_blind() {
        let (bss, prep, m) = fitted(VariantTag::Proposed, true);
        assert!(m.encoding.aau_vocab.is_empty());
        let bs = bss.iter().find(|b| b.bs_id == prep[0].bs_id).unwrap();
        let pt = SamplePoint {
            longitude: bs.location.longitude + 0.004,
            latitude: bs.location.latitude,
            altitude: 150.0,
        };
        let mut other = bs.clone();
        other.static_params.aau_type = "SOMETHING_ELSE".into();
        assert_eq!(
            m.predict_rsrp(bs, &pt).unwrap(),
            m.predict_rsrp(&other, &pt).unwrap()
        );
    }

    #[test]
    fn unseen_categories_encode_as_zeros() {
        let (_, prep, m) = fitted(VariantTag::Benchmark2, false);
        let mut s = prep[0].clone();
        s.compressed.beam_static.aau_type = "NEW".into();
        s.compressed.beam_static.coverage_scenario = "NEW".into();
        let x = m.encoding.encode(&[&s], &[Field::Static]).unwrap();
        let e = &m.encoding;
        let nonzero: Vec<_> = (0..x.ncols()).filter(|&j| x[[0, j]] != 0.0).collect();
        // only the standardized channel column can be nonzero
        assert!(nonzero.iter().all(|&j| j == e.aau_vocab.len()));
    }

    #[test]
    fn standardized_training_columns() {
        let (_, prep) = dataset();
        let refs: Vec<_> = prep.iter().collect();
        let enc = FeatureEncoding::fit(&refs, 8, false, TargetMode::RelativeToTxPower).unwrap();
        let x = enc
            .encode(
                &refs,
                &[
                    Field::DeltaH,
                    Field::DeltaV,
                    Field::Distance,
                    Field::Frequency,
                ],
            )
            .unwrap();
        for col in x.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(
                mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-6,
                "{mean} {std}"
            );
        }
    }

    #[test]
    fn constant_training_column_scales_relative_to_its_value() {
        let (_, prep) = dataset();
        let f0 = prep[0].compressed.carrier_frequency;
        let same: Vec<_> = prep
            .iter()
            .filter(|p| p.compressed.carrier_frequency == f0)
            .collect();
        let enc = FeatureEncoding::fit(&same, 8, false, TargetMode::RelativeToTxPower).unwrap();
        let other = prep
            .iter()
            .find(|p| p.compressed.carrier_frequency != f0)
            .unwrap();
        let x = enc.encode(&[other], &[Field::Frequency]).unwrap();
        let want = (other.compressed.carrier_frequency - f0) / f0;
        assert!((x[[0, 0]] - want).abs() < 1e-12);
    }

    #[test]
    fn proposed_is_smaller_than_an_equally_wide_dense_mlp() {
        let (_, _, m) = fitted(VariantTag::Proposed, false);
        let arch = Architecture::default();
        let enc = &m.encoding;
        let proposed = build_variant(VariantTag::Proposed, 8, enc.clone(), &arch, 0).unwrap();
        // a single dense MLP over the same inputs with the subnets' combined width
        let dense = MlpSpec::new(
            VariantTag::Benchmark2.layout()[0]
                .iter()
                .map(|&f| enc.field_width(f))
                .sum(),
            arch.subnet_layers,
            3 * arch.hidden_width,
            9,
        );
        assert!(proposed.param_count() < dense.param_count());
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let (bss, prep, m) = fitted(VariantTag::Wrong2, false);
        let back = DisentangledModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let bs = bss.iter().find(|b| b.bs_id == prep[3].bs_id).unwrap();
        let pt = SamplePoint {
            longitude: bs.location.longitude,
            latitude: bs.location.latitude + 0.01,
            altitude: 500.0,
        };
        assert_eq!(
            m.predict_rsrp(bs, &pt).unwrap(),
            back.predict_rsrp(bs, &pt).unwrap()
        );
        assert!(DisentangledModel::from_json("{}").is_err());
    }

    #[test]
    fn benchmark3_reads_raw_parameters() {
        let (_, prep, m) = fitted(VariantTag::Benchmark3, false);
        assert!(matches!(
            m.forward_fused(&prep[0].compressed),
            Err(Error::State(_))
        ));
        let refs: Vec<_> = prep.iter().take(4).collect();
        assert_eq!(m.predict_prepared(&refs).unwrap().len(), 4);
    }
}
