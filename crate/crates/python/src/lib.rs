//! Python bindings. Arrays cross the boundary as nested lists; engine errors
//! surface as `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use motiondiff::denoiser::{self, DenoiseInput, Denoiser, Example, TrainConfig};
use motiondiff::sampler::{self, GenerationPlan};
use motiondiff::{metrics, rng, Condition, NoiseSchedule, TokenSequence};
use ndarray::Array2;

fn err(e: motiondiff::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>, motiondiff::Error> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(motiondiff::Error::Parameter("rows differ in length".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| motiondiff::Error::Parameter(e.to_string()))
}

/// Token vocabulary with distance ranks, quantizer and decoder.
#[pyclass(name = "Codebook", module = "pymotiondiff", frozen)]
pub struct PyCodebook {
    inner: motiondiff::Codebook,
}

#[pymethods]
impl PyCodebook {
    #[new]
    #[pyo3(signature = (entries, seed = 0))]
    fn new(entries: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        let inner = motiondiff::Codebook::from_entries(from_rows(&entries).map_err(err)?, seed)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn synthetic(k: usize, d: usize, clusters: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: motiondiff::Codebook::synthetic(k, d, clusters, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: motiondiff::Codebook::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.entries())
    }

    /// `ranks[i][j]`: 1-based rank of entry `i` around entry `j`.
    fn distance_ranks(&self) -> Vec<Vec<usize>> {
        let r = self.inner.distance_ranks();
        (0..r.len())
            .map(|i| (0..r.len()).map(|j| r.rank(i, j)).collect())
            .collect()
    }

    fn quantize(&self, v: Vec<f64>) -> PyResult<usize> {
        self.inner.quantize(&v).map_err(err)
    }

    /// Decoded frames for a MASK-free token list.
    #[pyo3(signature = (states, fps = 20.0))]
    fn decode(&self, states: Vec<usize>, fps: f64) -> PyResult<Vec<Vec<f64>>> {
        let traj = self.inner.decode_states(&states, fps).map_err(err)?;
        Ok(to_rows(traj.frames()))
    }
}

/// Forward-chain matrices for a linear schedule.
#[pyclass(name = "TransitionModel", module = "pymotiondiff", frozen)]
pub struct PyTransitionModel {
    inner: motiondiff::TransitionModel,
}

#[pymethods]
impl PyTransitionModel {
    #[staticmethod]
    fn uniform(steps: usize, gamma_max: f64, alpha_min: f64, k: usize) -> PyResult<Self> {
        let s = NoiseSchedule::linear(steps, gamma_max, alpha_min).map_err(err)?;
        Ok(Self {
            inner: motiondiff::TransitionModel::uniform(s, k).map_err(err)?,
        })
    }

    #[staticmethod]
    fn dynamic(
        steps: usize,
        gamma_max: f64,
        alpha_min: f64,
        codebook: &PyCodebook,
        eta: f64,
    ) -> PyResult<Self> {
        let s = NoiseSchedule::linear(steps, gamma_max, alpha_min).map_err(err)?;
        Ok(Self {
            inner: motiondiff::TransitionModel::dynamic(s, codebook.inner.distance_ranks(), eta)
                .map_err(err)?,
        })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn num_tokens(&self) -> usize {
        self.inner.num_tokens()
    }

    fn step(&self, t: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(t, 1)?;
        Ok(to_rows(self.inner.step(t)))
    }

    fn cumulative(&self, t: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(t, 0)?;
        Ok(to_rows(self.inner.cumulative(t)))
    }

    fn posterior(&self, z_t: usize, z0: usize, t: usize) -> PyResult<Vec<f64>> {
        self.inner.posterior(z_t, z0, t).map_err(err)
    }

    fn reverse_mixture(&self, z_t: usize, t: usize, p0: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.reverse_mixture(z_t, t, &p0).map_err(err)
    }

    fn forward_sample(&self, states: Vec<usize>, t: usize, seed: u64) -> PyResult<Vec<usize>> {
        let seq =
            TokenSequence::single(states, self.inner.num_tokens(), Condition::Null).map_err(err)?;
        let out = self
            .inner
            .forward_sample(&seq, t, &mut rng::root(seed))
            .map_err(err)?;
        Ok(out.states().to_vec())
    }

    fn audit_table(&self) -> String {
        self.inner.audit_table()
    }
}

impl PyTransitionModel {
    fn check(&self, t: usize, lo: usize) -> PyResult<()> {
        if t < lo || t > self.inner.steps() {
            return Err(PyValueError::new_err(format!(
                "t={t} outside {lo}..={}",
                self.inner.steps()
            )));
        }
        Ok(())
    }
}

/// Additive log-linear table denoiser.
#[pyclass(name = "TabularDenoiser", module = "pymotiondiff")]
pub struct PyTabular {
    inner: denoiser::TabularDenoiser,
}

#[pymethods]
impl PyTabular {
    #[new]
    fn new(num_conditions: usize, buckets: usize, k: usize, steps: usize) -> PyResult<Self> {
        Ok(Self {
            inner: denoiser::TabularDenoiser::new(num_conditions, buckets, k, steps)
                .map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: denoiser::TabularDenoiser::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn randomize(&mut self, seed: u64, scale: f64) {
        self.inner.randomize(seed, scale);
    }

    /// `p(z_0 | z_t, y)` rows for one segment; condition 0 is null.
    fn predict(&self, states: Vec<usize>, condition: u32, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let conds = vec![Condition::from(condition); states.len()];
        let offsets: Vec<usize> = (0..states.len()).collect();
        let input = DenoiseInput {
            states: &states,
            conditions: &conds,
            offsets: &offsets,
        };
        Ok(to_rows(&self.inner.predict(&input, t).map_err(err)?))
    }

    /// Trains on `(condition, tokens)` pairs; returns the per-epoch loss.
    #[pyo3(signature = (examples, transitions, epochs = 200, learning_rate = 0.1, null_prob = 0.1, lambda_ = 5e-4, batch_size = 8, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        examples: Vec<(u32, Vec<usize>)>,
        transitions: &PyTransitionModel,
        epochs: usize,
        learning_rate: f64,
        null_prob: f64,
        lambda_: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let data: Vec<Example> = examples
            .into_iter()
            .map(|(c, tokens)| Example {
                condition: Condition::from(c),
                tokens,
            })
            .collect();
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            null_prob,
            lambda: lambda_,
            batch_size,
            seed,
        };
        denoiser::train(&mut self.inner, &data, &transitions.inner, &cfg).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (denoiser, transitions, condition, length, scale = 4.0, seed = 0))]
fn generate_single(
    denoiser: &PyTabular,
    transitions: &PyTransitionModel,
    condition: u32,
    length: usize,
    scale: f64,
    seed: u64,
) -> PyResult<Vec<usize>> {
    let seq = sampler::generate_single(
        &denoiser.inner,
        &transitions.inner,
        Condition::from(condition),
        length,
        scale,
        &mut rng::substream(seed, 0),
    )
    .map_err(err)?;
    Ok(seq.states().to_vec())
}

/// Two-phase sampling over `(condition, length)` segments; returns the states
/// and the interior boundaries.
#[pyfunction]
#[pyo3(signature = (denoiser, transitions, segments, independent_start, scale = 2.0, seed = 0))]
fn generate_multi(
    denoiser: &PyTabular,
    transitions: &PyTransitionModel,
    segments: Vec<(u32, usize)>,
    independent_start: usize,
    scale: f64,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let plan = GenerationPlan {
        segments: segments
            .into_iter()
            .map(|(c, l)| (Condition::from(c), l))
            .collect(),
        independent_start,
        scale,
        seed,
    };
    let seq = sampler::generate_multi(&plan, &denoiser.inner, &transitions.inner).map_err(err)?;
    Ok((seq.states().to_vec(), seq.interior_boundaries().to_vec()))
}

#[pyfunction]
fn guided_log_probs(
    cond: Vec<Vec<f64>>,
    uncond: Vec<Vec<f64>>,
    scale: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let c = from_rows(&cond).map_err(err)?;
    let u = from_rows(&uncond).map_err(err)?;
    Ok(to_rows(
        &sampler::guided_log_probs(&c, &u, scale).map_err(err)?,
    ))
}

/// Log dimensionless jerk over frames `start..end`; returns
/// `(total, per_joint)`.
#[pyfunction]
#[pyo3(signature = (frames, fps, joint_dim, start, end, eps = metrics::DEFAULT_EPS))]
fn jerk(
    frames: Vec<Vec<f64>>,
    fps: f64,
    joint_dim: usize,
    start: usize,
    end: usize,
    eps: f64,
) -> PyResult<(f64, Vec<f64>)> {
    let traj = motiondiff::MotionTrajectory::new(from_rows(&frames).map_err(err)?, fps, joint_dim)
        .map_err(err)?;
    let r = metrics::jerk(&traj, start..end, eps).map_err(err)?;
    Ok((r.total, r.per_joint))
}

#[pyfunction]
#[pyo3(signature = (boundaries, total_frames, half_width = 40))]
fn transition_windows(
    boundaries: Vec<usize>,
    total_frames: usize,
    half_width: usize,
) -> Vec<(usize, usize)> {
    metrics::transition_windows(&boundaries, half_width, total_frames)
        .into_iter()
        .map(|w| (w.start, w.end))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (features, pair_count, seed = 0))]
fn diversity(features: Vec<Vec<f64>>, pair_count: usize, seed: u64) -> PyResult<f64> {
    metrics::diversity(&features, pair_count, &mut rng::root(seed)).map_err(err)
}

#[pyfunction]
fn frechet_lite(set_a: Vec<Vec<f64>>, set_b: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::frechet_lite(&set_a, &set_b).map_err(err)
}

/// Discrete diffusion over motion tokens.
#[pymodule]
pub mod pymotiondiff {
    #[pymodule_export]
    use super::{
        diversity, frechet_lite, generate_multi, generate_single, guided_log_probs, jerk,
        transition_windows, PyCodebook, PyTabular, PyTransitionModel,
    };
}
