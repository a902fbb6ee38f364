//! Variance-based sensitivity: Saltelli sampling, Jansen total effects.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grfn::{EvalOrder, ExecError, Executor, Grfn, Value};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("no bounds for input {0}")]
    MissingBounds(String),
    #[error("{0} is not a variable of the top scope")]
    UnknownInput(String),
    #[error("no output named {0}")]
    UnknownOutput(String),
    #[error("sample count {0} is not a power of two of at least 64")]
    SampleCount(usize),
    #[error("grid size {0} is below 2")]
    Grid(usize),
    #[error("need at least two inputs for a surface, have {0}")]
    TooFewInputs(usize),
    #[error("sample variance is not finite")]
    NonFiniteVariance,
    #[error("evaluation failed at {}: {source}", fmt_sample(.sample))]
    Exec {
        sample: BTreeMap<String, f64>,
        #[source]
        source: ExecError,
    },
}

fn fmt_sample(s: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (i, (k, v)) in s.iter().enumerate() {
        let _ = write!(out, "{}{k}={v}", if i > 0 { ", " } else { "" });
    }
    out
}

/// Uniform input ranges, keyed by input name. JSON: `{"X1": [lo, hi]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bounds(pub BTreeMap<String, (f64, f64)>);

impl Bounds {
    pub fn from_json(text: &str) -> Result<Bounds, AnalysisError> {
        let b: Bounds =
            serde_json::from_str(text).map_err(|e| AnalysisError::Bounds(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (k, (lo, hi)) in &self.0 {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(AnalysisError::Bounds(format!(
                    "{k}: need finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    fn midpoint(&self, name: &str) -> f64 {
        let (lo, hi) = self.0[name];
        lo + 0.5 * (hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputIndex {
    pub input: String,
    pub s1: f64,
    pub st: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub x: String,
    pub y: String,
    pub grid: usize,
    /// `(x, y, f)`, x outer and y inner.
    pub points: Vec<(f64, f64, f64)>,
}

impl Surface {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,f\n");
        for (x, y, f) in &self.points {
            let _ = writeln!(s, "{x},{y},{f}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub output: String,
    pub n_samples: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub variance: f64,
    pub indices: Vec<InputIndex>,
    pub top_pair: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<Surface>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SensitivityReport {
    pub fn index(&self, input: &str) -> Option<&InputIndex> {
        self.indices
            .iter()
            .find(|i| i.input.eq_ignore_ascii_case(input))
    }
}

/// Monte Carlo slack used by the report invariants.
pub fn mc_epsilon(n: usize) -> f64 {
    3.0 / (n as f64).sqrt()
}

/// Pairwise summation: the order of additions is fixed by the length alone.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().fold(0.0, |a, b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// A network evaluated on named scalar inputs, one output.
struct Model<'g> {
    ex: Executor<'g>,
    output: String,
    inputs: Vec<String>,
}

impl<'g> Model<'g> {
    fn new(grfn: &'g Grfn, output: &str, bounds: &Bounds) -> Result<Self, AnalysisError> {
        bounds.validate()?;
        let out = grfn
            .output_var(output)
            .ok_or_else(|| AnalysisError::UnknownOutput(output.to_string()))?;
        for id in &grfn.inputs {
            let v = grfn.variable(id).expect("inputs are variables");
            if v.scope == grfn.scope && !bounds.0.keys().any(|k| k.eq_ignore_ascii_case(&v.name)) {
                return Err(AnalysisError::MissingBounds(v.name.clone()));
            }
        }
        for k in bounds.0.keys() {
            let known = grfn
                .declarations
                .iter()
                .any(|d| d.scope == grfn.scope && d.name.eq_ignore_ascii_case(k));
            if !known {
                return Err(AnalysisError::UnknownInput(k.clone()));
            }
        }
        let ex = Executor::new(grfn).map_err(|source| AnalysisError::Exec {
            sample: BTreeMap::new(),
            source,
        })?;
        Ok(Model {
            ex,
            output: out.name.clone(),
            inputs: bounds.0.keys().cloned().collect(),
        })
    }

    fn eval(&self, x: &[f64]) -> Result<f64, AnalysisError> {
        let sample = || {
            self.inputs
                .iter()
                .cloned()
                .zip(x.iter().copied())
                .collect::<BTreeMap<_, _>>()
        };
        let vals: BTreeMap<String, Value<f64>> = self
            .inputs
            .iter()
            .zip(x)
            .map(|(k, v)| (k.clone(), Value::Num(*v)))
            .collect();
        let out = self
            .ex
            .run(&vals, EvalOrder::Forward)
            .map_err(|source| AnalysisError::Exec {
                sample: sample(),
                source,
            })?;
        out.get(&self.output)
            .and_then(Value::as_f64)
            .ok_or_else(|| AnalysisError::UnknownOutput(self.output.clone()))
    }

    /// Evaluate rows in parallel; the first failing row in order wins.
    fn eval_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, AnalysisError> {
        rows.par_iter()
            .map(|r| self.eval(r))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// First-order (Saltelli) and total (Jansen) indices from `n·(k+2)`
/// evaluations of `output`, inputs uniform over `bounds`.
pub fn sobol_indices(
    grfn: &Grfn,
    output: &str,
    bounds: &Bounds,
    n: usize,
    seed: u64,
) -> Result<SensitivityReport, AnalysisError> {
    if n < 64 || !n.is_power_of_two() {
        return Err(AnalysisError::SampleCount(n));
    }
    let model = Model::new(grfn, output, bounds)?;
    let k = model.inputs.len();
    let ranges: Vec<(f64, f64)> = model.inputs.iter().map(|i| bounds.0[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                ranges
                    .iter()
                    .map(|(lo, hi)| lo + rng.gen::<f64>() * (hi - lo))
                    .collect()
            })
            .collect()
    };
    let a = draw();
    let b = draw();
    let fa = model.eval_rows(&a)?;
    let fb = model.eval_rows(&b)?;
    let mut fab = Vec::with_capacity(k);
    for i in 0..k {
        let rows: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(ra, rb)| {
                let mut r = ra.clone();
                r[i] = rb[i];
                r
            })
            .collect();
        fab.push(model.eval_rows(&rows)?);
    }

    let all: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let m = mean(&all);
    let dev: Vec<f64> = all.iter().map(|y| (y - m) * (y - m)).collect();
    let variance = pairwise_sum(&dev) / (all.len() - 1) as f64;
    if !variance.is_finite() {
        return Err(AnalysisError::NonFiniteVariance);
    }
    // centering leaves the estimators unbiased and cuts their spread when
    // the mean is large against the spread
    let fb: Vec<f64> = fb.iter().map(|y| y - m).collect();
    let mut warnings = Vec::new();
    let indices: Vec<InputIndex> = model
        .inputs
        .iter()
        .zip(&fab)
        .map(|(name, fi)| {
            if variance <= 0.0 {
                return InputIndex {
                    input: name.clone(),
                    s1: 0.0,
                    st: 0.0,
                };
            }
            let s1: Vec<f64> = (0..n).map(|j| fb[j] * (fi[j] - fa[j])).collect();
            let st: Vec<f64> = (0..n).map(|j| (fa[j] - fi[j]).powi(2)).collect();
            InputIndex {
                input: name.clone(),
                s1: mean(&s1) / variance,
                st: 0.5 * mean(&st) / variance,
            }
        })
        .collect();
    if variance <= 0.0 {
        warnings.push(format!(
            "{} is constant over the bounds; indices set to 0",
            model.output
        ));
    }
    Ok(SensitivityReport {
        output: model.output.clone(),
        n_samples: n,
        seed,
        evaluations: n * (k + 2),
        variance,
        top_pair: top_pair(&indices),
        indices,
        surface: None,
        warnings,
    })
}

/// The two inputs with the largest total index, ties by name.
pub fn top_pair(indices: &[InputIndex]) -> Option<(String, String)> {
    let mut v: Vec<&InputIndex> = indices.iter().collect();
    v.sort_by(|a, b| b.st.total_cmp(&a.st).then_with(|| a.input.cmp(&b.input)));
    match v.as_slice() {
        [x, y, ..] => Some((x.input.clone(), y.input.clone())),
        _ => None,
    }
}

/// `grid × grid` evaluations over the report's top pair, other inputs at
/// the middle of their bounds.
pub fn top_pair_surface(
    grfn: &Grfn,
    output: &str,
    bounds: &Bounds,
    report: &SensitivityReport,
    grid: usize,
) -> Result<Surface, AnalysisError> {
    if grid < 2 {
        return Err(AnalysisError::Grid(grid));
    }
    let (x, y) = report
        .top_pair
        .clone()
        .ok_or(AnalysisError::TooFewInputs(report.indices.len()))?;
    let model = Model::new(grfn, output, bounds)?;
    let ix = model
        .inputs
        .iter()
        .position(|i| *i == x)
        .ok_or_else(|| AnalysisError::MissingBounds(x.clone()))?;
    let iy = model
        .inputs
        .iter()
        .position(|i| *i == y)
        .ok_or_else(|| AnalysisError::MissingBounds(y.clone()))?;
    let base: Vec<f64> = model.inputs.iter().map(|i| bounds.midpoint(i)).collect();
    let axis = |name: &str, i: usize| {
        let (lo, hi) = bounds.0[name];
        if i == grid - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (grid - 1) as f64
        }
    };
    let mut rows = Vec::with_capacity(grid * grid);
    let mut coords = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let (xv, yv) = (axis(&x, i), axis(&y, j));
            let mut r = base.clone();
            r[ix] = xv;
            r[iy] = yv;
            rows.push(r);
            coords.push((xv, yv));
        }
    }
    let f = model.eval_rows(&rows)?;
    Ok(Surface {
        x,
        y,
        grid,
        points: coords
            .into_iter()
            .zip(f)
            .map(|((a, b), f)| (a, b, f))
            .collect(),
    })
}
