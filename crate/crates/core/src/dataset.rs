//! Synthetic supervised dataset: random type sequences labeled with
//! GA-optimal serving orders.
//!
//! On disk a dataset is UTF-8 text with one JSON object per line,
//! `{"input":[..],"target":[..],"len":n}`, both arrays zero-padded to
//! length 10, plus a JSON manifest sidecar (same path with a
//! `.manifest.json` extension) recording how the data was produced. Padding
//! reuses value 0, which is also a valid type id; `len` alone disambiguates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::evaluator::evaluate;
use crate::ga::{run_ga_integer, GAConfig};
use crate::task::{EvaluationContext, ProblemInstance, Schedule, TaskCatalog, NUM_TASK_TYPES};

/// Fixed padded sequence length of the on-disk format.
pub const MAX_SEQ_LEN: usize = 10;

/// Bumped on any incompatible change to the line or manifest layout.
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// One supervised example: a task-type sequence and its GA-optimal
/// reordering, both zero-padded to [`MAX_SEQ_LEN`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSample {
    #[serde(rename = "input")]
    pub input_seq: Vec<usize>,
    #[serde(rename = "target")]
    pub target_seq: Vec<usize>,
    #[serde(rename = "len")]
    pub actual_length: usize,
}

impl DatasetSample {
    /// Pad and validate.
    pub fn new(input_ids: &[usize], target_ids: &[usize]) -> Result<Self> {
        let pad = |ids: &[usize]| {
            let mut v = ids.to_vec();
            v.resize(MAX_SEQ_LEN, 0);
            v
        };
        let sample = DatasetSample {
            input_seq: pad(input_ids),
            target_seq: pad(target_ids),
            actual_length: input_ids.len(),
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Non-pad prefix of the input sequence.
    pub fn input_ids(&self) -> &[usize] {
        &self.input_seq[..self.actual_length]
    }

    /// Non-pad prefix of the target sequence.
    pub fn target_ids(&self) -> &[usize] {
        &self.target_seq[..self.actual_length]
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at_line(0)
    }

    /// Like [`DatasetSample::validate`] but errors carry a 1-based source
    /// line number.
    pub fn validate_at_line(&self, line: usize) -> Result<()> {
        match self.invariant_violation() {
            None => Ok(()),
            Some(detail) => Err(SchedError::MalformedSample { line, detail }),
        }
    }

    fn invariant_violation(&self) -> Option<String> {
        if self.input_seq.len() != MAX_SEQ_LEN || self.target_seq.len() != MAX_SEQ_LEN {
            return Some(format!(
                "sequences must have exactly {MAX_SEQ_LEN} entries, got {} and {}",
                self.input_seq.len(),
                self.target_seq.len()
            ));
        }
        if self.actual_length == 0 || self.actual_length > MAX_SEQ_LEN {
            return Some(format!(
                "len must be in 1..={MAX_SEQ_LEN}, got {}",
                self.actual_length
            ));
        }
        for (name, seq) in [("input", &self.input_seq), ("target", &self.target_seq)] {
            if let Some(&bad) = seq.iter().find(|&&v| v >= NUM_TASK_TYPES) {
                return Some(format!("{name} contains type id {bad}, valid ids are 0..=8"));
            }
            if seq[self.actual_length..].iter().any(|&v| v != 0) {
                return Some(format!("{name} has non-zero entries beyond len"));
            }
        }
        let count = |seq: &[usize]| {
            let mut c = [0usize; NUM_TASK_TYPES];
            for &v in seq {
                c[v] += 1;
            }
            c
        };
        if count(self.input_ids()) != count(self.target_ids()) {
            return Some("target is not a permutation of input".into());
        }
        None
    }

    /// The problem instance described by the input sequence.
    pub fn instance(&self, catalog: &TaskCatalog) -> Result<ProblemInstance> {
        ProblemInstance::from_type_ids(catalog, self.input_ids())
    }

    /// The target serving order as a schedule over the input instance.
    pub fn target_schedule(&self, instance: &ProblemInstance) -> Result<Schedule> {
        Schedule::from_type_order(instance, self.target_ids())
    }
}

/// Provenance of a dataset file, stored alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_count: usize,
    pub max_length: usize,
    pub catalog: TaskCatalog,
    pub ga_config: GAConfig,
    pub lambda: f64,
    pub generator_seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(SchedError::BadManifest(format!(
                "format_version {} unsupported (expected {DATASET_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.max_length != MAX_SEQ_LEN {
            return Err(SchedError::BadManifest(format!(
                "max_length {} unsupported (expected {MAX_SEQ_LEN})",
                self.max_length
            )));
        }
        Ok(())
    }
}

/// Stable per-index seed derivation (splitmix64 finalizer), so samples can
/// be generated independently and in parallel yet land byte-identical.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random instance: length uniform in `1..=max_len`, then i.i.d. uniform
/// type ids.
pub fn random_instance(
    catalog: &TaskCatalog,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<ProblemInstance> {
    if max_len == 0 {
        return Err(SchedError::InvalidConfig("max_len must be positive".into()));
    }
    let n = rng.gen_range(1..=max_len);
    random_instance_of_len(catalog, n, rng)
}

/// Random instance of an exact length (used by the benchmark grid, where
/// every trial at a given N must have N tasks).
pub fn random_instance_of_len(
    catalog: &TaskCatalog,
    n: usize,
    rng: &mut impl Rng,
) -> Result<ProblemInstance> {
    let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..catalog.len())).collect();
    ProblemInstance::from_type_ids(catalog, &ids)
}

/// Label one instance: the target is the instance's type ids reordered by
/// the integer GA's best schedule.
pub fn label_with_ga(
    instance: &ProblemInstance,
    ctx: &EvaluationContext,
    ga_cfg: &GAConfig,
) -> Result<DatasetSample> {
    if instance.len() > MAX_SEQ_LEN {
        return Err(SchedError::InstanceTooLarge {
            n: instance.len(),
            max_n: MAX_SEQ_LEN,
        });
    }
    let result = run_ga_integer(instance, ctx, ga_cfg)?;
    let target = result.best_schedule.apply_to_type_ids(instance);
    DatasetSample::new(&instance.type_ids(), &target)
}

/// Generate `count` labeled samples plus their manifest. Sample `i` is
/// derived entirely from `mix_seed(generator_seed, i)`, so generation is
/// order-independent and parallel across samples.
pub fn generate(
    count: usize,
    catalog: &TaskCatalog,
    ctx: &EvaluationContext,
    ga_cfg: &GAConfig,
    generator_seed: u64,
) -> Result<(Vec<DatasetSample>, DatasetManifest)> {
    ctx.validate()?;
    ga_cfg.validate()?;
    let samples: Vec<DatasetSample> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(generator_seed, i as u64));
            let instance = random_instance(catalog, MAX_SEQ_LEN, &mut rng)?;
            let cfg = ga_cfg.with_seed(rng.gen());
            label_with_ga(&instance, ctx, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        sample_count: samples.len(),
        max_length: MAX_SEQ_LEN,
        catalog: catalog.clone(),
        ga_config: *ga_cfg,
        lambda: ctx.lambda,
        generator_seed,
    };
    Ok((samples, manifest))
}

/// Sidecar path: `data.jsonl` -> `data.manifest.json`.
pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("manifest.json")
}

pub fn write_dataset(
    samples: &[DatasetSample],
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<()> {
    manifest.validate()?;
    if manifest.sample_count != samples.len() {
        return Err(SchedError::BadManifest(format!(
            "manifest says {} samples, got {}",
            manifest.sample_count,
            samples.len()
        )));
    }
    let file = File::create(path).map_err(|e| SchedError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| SchedError::json(path, e))?;
        w.write_all(b"\n").map_err(|e| SchedError::io(path, e))?;
    }
    w.flush().map_err(|e| SchedError::io(path, e))?;

    let mpath = manifest_path(path);
    let mfile = File::create(&mpath).map_err(|e| SchedError::io(&mpath, e))?;
    let mut mw = BufWriter::new(mfile);
    serde_json::to_writer_pretty(&mut mw, manifest).map_err(|e| SchedError::json(&mpath, e))?;
    mw.write_all(b"\n").map_err(|e| SchedError::io(&mpath, e))?;
    mw.flush().map_err(|e| SchedError::io(&mpath, e))
}

/// Read and fully validate a dataset. Corrupt lines are reported with
/// their 1-based line number.
pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetSample>, DatasetManifest)> {
    let mpath = manifest_path(path);
    let mfile = File::open(&mpath).map_err(|e| SchedError::io(&mpath, e))?;
    let manifest: DatasetManifest =
        serde_json::from_reader(BufReader::new(mfile)).map_err(|e| SchedError::json(&mpath, e))?;
    manifest.validate()?;

    let file = File::open(path).map_err(|e| SchedError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::with_capacity(manifest.sample_count);
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SchedError::io(path, e))?;
        let number = idx + 1;
        let sample: DatasetSample =
            serde_json::from_str(&line).map_err(|e| SchedError::MalformedSample {
                line: number,
                detail: e.to_string(),
            })?;
        sample.validate_at_line(number)?;
        samples.push(sample);
    }
    if samples.len() != manifest.sample_count {
        return Err(SchedError::BadManifest(format!(
            "manifest says {} samples, file has {}",
            manifest.sample_count,
            samples.len()
        )));
    }
    Ok((samples, manifest))
}

/// Fraction of samples whose target objective equals the brute-force
/// optimum (checked on samples with at most `cap` tasks; larger samples
/// are skipped). Returns `(checked, optimal)` counts.
pub fn oracle_audit(
    samples: &[DatasetSample],
    catalog: &TaskCatalog,
    ctx: &EvaluationContext,
    cap: usize,
) -> Result<(usize, usize)> {
    let audit_ctx = ctx.with_exec_seconds(0.0);
    let mut checked = 0;
    let mut optimal = 0;
    for s in samples {
        if s.actual_length > cap {
            continue;
        }
        let instance = s.instance(catalog)?;
        let target = s.target_schedule(&instance)?;
        let target_obj = evaluate(&instance, &target, &audit_ctx)?.objective;
        let (_, best) = crate::baselines::brute_force_optimal(&instance, &audit_ctx, cap)?;
        checked += 1;
        if (target_obj - best.objective).abs() <= 1e-12 {
            optimal += 1;
        }
    }
    Ok((checked, optimal))
}
