//! Problem abstractions and the smoothed Cournot test family.
//!
//! Each agent `i` owns a private pair of evaluations at a shared decision
//! vector `x ∈ R^n`: its component `F_i` of the stacked game map and the full
//! gradient `∇f_i` of its slice of the selection objective. The distributed
//! loops only ever touch these through the [`LocalOracle`] interface, so any
//! problem expressible that way plugs in; the builders here produce the
//! capacity-capped Cournot competition used throughout the experiments, with
//! box constraints replaced by a Moreau-smoothed penalty.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::{Distribution, Uniform};
use rand_distr::Normal;
use std::sync::Arc;

use crate::linalg;
use crate::rng::{DrawKey, STREAM_INSTANCE};
use crate::{Error, Result};

/// Gradient of the Moreau-smoothed box indicator: `(z − clamp(z, lo, hi))/eta`.
/// Zero inside the box, linear ramp outside.
pub fn moreau_grad(z: f64, lo: f64, hi: f64, eta: f64) -> f64 {
    (z - z.max(lo).min(hi)) / eta
}

/// Squared distance to the box, halved and smoothed: `dist²(z, [lo,hi])/(2eta)`.
pub fn moreau_value(z: f64, lo: f64, hi: f64, eta: f64) -> f64 {
    let d = z - z.max(lo).min(hi);
    d * d / (2.0 * eta)
}

/// How the per-agent cost intercepts `b_i` are produced.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    /// Fixed intercepts drawn once at build time from a Gaussian.
    GaussianFixed { mean: f64, variance: f64 },
    /// Intercepts re-sampled uniformly at every oracle call; the deterministic
    /// counterpart uses the distribution mean.
    UniformSampled { lo: f64, hi: f64 },
}

/// Parameters of the Moreau-smoothed Cournot game.
///
/// Player `i` picks a production level `x_i`; their map component is
/// `F_i(x) = a_i x_i + b_i + Σ_{j≠i} c_ij x_j + moreau_grad(x_i)`, and the
/// selection objective adds the welfare regularizer `(welfare_reg/2)‖x‖²`
/// split evenly across players.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotParams {
    /// Interaction matrix `c_ij` (its diagonal equals `own_slope` for built
    /// instances, but the fields are kept independent).
    pub interaction: Array2<f64>,
    /// Per-player quadratic price coefficients `a_i ≥ 0`.
    pub own_slope: Array1<f64>,
    /// Deterministic cost intercepts `b_i` (the distribution mean for
    /// stochastic instances).
    pub base_cost: Array1<f64>,
    /// Per-player capacity upper bounds; the feasible box is `[0, caps_i]`.
    pub caps: Array1<f64>,
    /// Moreau smoothing parameter η > 0.
    pub smoothing: f64,
    /// Welfare regularization coefficient θ ≥ 0.
    pub welfare_reg: f64,
    /// When present, intercepts are re-drawn from `U[lo, hi]` per oracle call.
    pub cost_noise: Option<(f64, f64)>,
}

impl CournotParams {
    pub fn m(&self) -> usize {
        self.own_slope.len()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.m() {
            return Err(Error::Dimension(format!(
                "agent index {i} out of range for {} players",
                self.m()
            )));
        }
        Ok(())
    }

    /// Structural checks cheap enough for parsers: consistent shapes, finite
    /// entries, positive caps and smoothing, nonnegative slopes and regularizer.
    pub fn check_shape(&self) -> Result<()> {
        let m = self.m();
        if self.interaction.nrows() != m || self.interaction.ncols() != m {
            return Err(Error::Dimension(format!(
                "interaction matrix is {}x{} for {m} players",
                self.interaction.nrows(),
                self.interaction.ncols()
            )));
        }
        if self.base_cost.len() != m || self.caps.len() != m {
            return Err(Error::Dimension("vector lengths disagree".into()));
        }
        let finite = self.interaction.iter().all(|x| x.is_finite())
            && self.own_slope.iter().all(|x| x.is_finite())
            && self.base_cost.iter().all(|x| x.is_finite())
            && self.caps.iter().all(|x| x.is_finite());
        if !finite || !self.smoothing.is_finite() || !self.welfare_reg.is_finite() {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        if self.own_slope.iter().any(|&a| a < 0.0) {
            return Err(Error::Validation("own_slope entries must be nonnegative".into()));
        }
        if self.caps.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Validation("caps must be positive".into()));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::Validation("smoothing must be positive".into()));
        }
        if self.welfare_reg < 0.0 {
            return Err(Error::Validation("welfare_reg must be nonnegative".into()));
        }
        if let Some((lo, hi)) = self.cost_noise {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation(format!(
                    "cost noise interval [{lo}, {hi}] is invalid"
                )));
            }
        }
        Ok(())
    }

    /// Full validation: shape checks plus monotonicity of the game map, i.e.
    /// positive semidefiniteness of the symmetrized interaction matrix
    /// (smallest eigenvalue at least −1e-8).
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let lo = self.interaction_min_eigenvalue()?;
        if lo < -1e-8 {
            return Err(Error::Validation(format!(
                "interaction matrix is not positive semidefinite: min eigenvalue {lo:e}"
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of `(C̄+C̄ᵀ)/2`, the monotonicity margin of the map.
    pub fn interaction_min_eigenvalue(&self) -> Result<f64> {
        let sym = 0.5 * (&self.interaction + &self.interaction.t());
        linalg::symmetric_min_eigenvalue(&sym)
    }

    /// The intercept used for agent `i` at this draw site: the keyed uniform
    /// sample for stochastic instances, the deterministic value otherwise.
    fn cost_at(&self, i: usize, key: Option<DrawKey>) -> f64 {
        match (self.cost_noise, key) {
            (Some((lo, hi)), Some(key)) => {
                let dist = Uniform::new_inclusive(lo, hi).expect("valid noise interval");
                dist.sample(&mut key.rng())
            }
            _ => self.base_cost[i],
        }
    }

    fn map_value(&self, i: usize, x: ArrayView1<f64>, cost: f64) -> f64 {
        let m = self.m();
        let mut v = self.own_slope[i] * x[i] + cost;
        for j in 0..m {
            if j != i {
                v += self.interaction[(i, j)] * x[j];
            }
        }
        v + moreau_grad(x[i], 0.0, self.caps[i], self.smoothing)
    }

    /// Map component of player `i`: a vector supported on coordinate `i`.
    pub fn map_component(&self, i: usize, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.map_component_keyed(i, x, None)
    }

    /// Keyed variant of [`CournotParams::map_component`], drawing `b_i(ξ)` for
    /// stochastic instances.
    pub fn map_component_keyed(
        &self,
        i: usize,
        x: ArrayView1<f64>,
        key: Option<DrawKey>,
    ) -> Result<Array1<f64>> {
        self.check_index(i)?;
        if x.len() != self.m() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates for {} players",
                x.len(),
                self.m()
            )));
        }
        let mut out = Array1::zeros(self.m());
        out[i] = self.map_value(i, x, self.cost_at(i, key));
        Ok(out)
    }

    /// Full gradient of player `i`'s objective slice: coordinate `i` carries
    /// `F_i(x) + (θ/m)x_i`, every other coordinate `j` carries
    /// `c_ij·x_i + (θ/m)x_j`.
    pub fn grad_component(&self, i: usize, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.grad_component_keyed(i, x, None)
    }

    /// Keyed variant of [`CournotParams::grad_component`], sharing the `b_i(ξ)`
    /// draw with the equally keyed map evaluation.
    pub fn grad_component_keyed(
        &self,
        i: usize,
        x: ArrayView1<f64>,
        key: Option<DrawKey>,
    ) -> Result<Array1<f64>> {
        self.check_index(i)?;
        if x.len() != self.m() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates for {} players",
                x.len(),
                self.m()
            )));
        }
        let m = self.m();
        let reg_share = self.welfare_reg / m as f64;
        let mut out = Array1::zeros(m);
        for j in 0..m {
            out[j] = self.interaction[(i, j)] * x[i] + reg_share * x[j];
        }
        out[i] = self.map_value(i, x, self.cost_at(i, key)) + reg_share * x[i];
        Ok(out)
    }

    /// Player `i`'s objective slice `f_i(x)` plus its share of the welfare
    /// regularizer; the closed form the gradient tests differentiate.
    pub fn objective_component(&self, i: usize, x: ArrayView1<f64>) -> Result<f64> {
        self.check_index(i)?;
        let m = self.m();
        let mut v = 0.5 * self.own_slope[i] * x[i] * x[i] + self.base_cost[i] * x[i];
        for j in 0..m {
            if j != i {
                v += self.interaction[(i, j)] * x[j] * x[i];
            }
        }
        v += moreau_value(x[i], 0.0, self.caps[i], self.smoothing);
        let norm_sq: f64 = x.iter().map(|t| t * t).sum();
        Ok(v + 0.5 * self.welfare_reg / m as f64 * norm_sq)
    }

    /// Deterministic stacked map `F(x) = C̄x + b̄ + moreau terms`.
    pub fn map_sum(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut v = self.interaction.dot(&x) + &self.base_cost;
        for i in 0..self.m() {
            // The diagonal of `interaction` already contributed a_i·x_i.
            v[i] += moreau_grad(x[i], 0.0, self.caps[i], self.smoothing);
        }
        v
    }

    /// Gradient of the summed selection objective,
    /// `(C̲+C̲ᵀ)x + b̄ + moreau terms + θx` with `C̲ = C̄ − diag(ā)/2`.
    pub fn grad_sum(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let m = self.m();
        let mut v = self.interaction.dot(&x) + self.interaction.t().dot(&x);
        for i in 0..m {
            v[i] -= self.own_slope[i] * x[i];
            v[i] += self.base_cost[i]
                + moreau_grad(x[i], 0.0, self.caps[i], self.smoothing)
                + self.welfare_reg * x[i];
        }
        v
    }

    /// Total regularized welfare `Σ f_i(x) + (θ/2)‖x‖²`.
    pub fn welfare(&self, x: ArrayView1<f64>) -> f64 {
        let m = self.m();
        let mut v = 0.0;
        for i in 0..m {
            v += 0.5 * self.own_slope[i] * x[i] * x[i] + self.base_cost[i] * x[i];
            for j in 0..m {
                if j != i {
                    v += self.interaction[(i, j)] * x[i] * x[j];
                }
            }
            v += moreau_value(x[i], 0.0, self.caps[i], self.smoothing);
        }
        let norm_sq: f64 = x.iter().map(|t| t * t).sum();
        v + 0.5 * self.welfare_reg * norm_sq
    }

    /// Serialize to the line-oriented parameter text format.
    pub fn to_text(&self) -> String {
        let join = |v: &Array1<f64>| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::from("cournot v1\n");
        out.push_str(&format!("m {}\n", self.m()));
        out.push_str(&format!("smoothing {}\n", self.smoothing));
        out.push_str(&format!("welfare_reg {}\n", self.welfare_reg));
        match self.cost_noise {
            Some((lo, hi)) => out.push_str(&format!("noise uniform {lo} {hi}\n")),
            None => out.push_str("noise none\n"),
        }
        out.push_str(&format!("own_slope {}\n", join(&self.own_slope)));
        out.push_str(&format!("base_cost {}\n", join(&self.base_cost)));
        out.push_str(&format!("caps {}\n", join(&self.caps)));
        for i in 0..self.m() {
            let row: Vec<String> =
                self.interaction.row(i).iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("row {}\n", row.join(" ")));
        }
        out
    }

    /// Parse the text format produced by [`CournotParams::to_text`]. Rejects
    /// malformed structure; numeric sanity is checked via
    /// [`CournotParams::check_shape`].
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut expect = |tag: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing '{tag}' line")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(t) if t == tag => Ok(parts.map(str::to_owned).collect()),
                other => Err(Error::Parse(format!("expected '{tag}', got {other:?}"))),
            }
        };
        let header = expect("cournot")?;
        if header != ["v1"] {
            return Err(Error::Parse(format!("unsupported version {header:?}")));
        }
        let m: usize = parse_single(&expect("m")?, "m")?;
        if m == 0 || m > 10_000 {
            return Err(Error::Parse(format!("player count {m} out of supported range")));
        }
        let smoothing: f64 = parse_single(&expect("smoothing")?, "smoothing")?;
        let welfare_reg: f64 = parse_single(&expect("welfare_reg")?, "welfare_reg")?;
        let noise_parts = expect("noise")?;
        let cost_noise = match noise_parts.first().map(String::as_str) {
            Some("none") if noise_parts.len() == 1 => None,
            Some("uniform") if noise_parts.len() == 3 => {
                let lo: f64 = noise_parts[1]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad noise bound: {e}")))?;
                let hi: f64 = noise_parts[2]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad noise bound: {e}")))?;
                Some((lo, hi))
            }
            _ => return Err(Error::Parse(format!("bad noise spec {noise_parts:?}"))),
        };
        let own_slope = parse_vector(&expect("own_slope")?, m, "own_slope")?;
        let base_cost = parse_vector(&expect("base_cost")?, m, "base_cost")?;
        let caps = parse_vector(&expect("caps")?, m, "caps")?;
        let mut interaction = Array2::zeros((m, m));
        for i in 0..m {
            let row = parse_vector(&expect("row")?, m, "row")?;
            interaction.row_mut(i).assign(&row);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing content after interaction rows".into()));
        }
        let params = CournotParams {
            interaction,
            own_slope,
            base_cost,
            caps,
            smoothing,
            welfare_reg,
            cost_noise,
        };
        params.check_shape()?;
        Ok(params)
    }
}

fn parse_single<T: std::str::FromStr>(parts: &[String], tag: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if parts.len() != 1 {
        return Err(Error::Parse(format!("'{tag}' expects one value, got {parts:?}")));
    }
    parts[0]
        .parse()
        .map_err(|e| Error::Parse(format!("bad '{tag}' value {:?}: {e}", parts[0])))
}

fn parse_vector(parts: &[String], m: usize, tag: &str) -> Result<Array1<f64>> {
    if parts.len() != m {
        return Err(Error::Parse(format!(
            "'{tag}' expects {m} values, got {}",
            parts.len()
        )));
    }
    let mut out = Array1::zeros(m);
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse()
            .map_err(|e| Error::Parse(format!("bad '{tag}' value {p:?}: {e}")))?;
    }
    Ok(out)
}

/// Welfare regularization coefficient from the interaction data:
/// `1e-5 + max(0, −λ_min((C̲+C̲ᵀ)/2))` with `C̲ = C̄ − diag(ā)/2`.
pub fn compute_theta_reg(interaction: &Array2<f64>, own_slope: &Array1<f64>) -> Result<f64> {
    let m = own_slope.len();
    if interaction.nrows() != m || interaction.ncols() != m {
        return Err(Error::Dimension(format!(
            "interaction matrix is {}x{} for {m} slopes",
            interaction.nrows(),
            interaction.ncols()
        )));
    }
    let mut sym = 0.5 * (interaction + &interaction.t());
    for i in 0..m {
        sym[(i, i)] -= 0.5 * own_slope[i];
    }
    let lo = linalg::symmetric_min_eigenvalue(&sym)?;
    Ok(1e-5 + (-lo).max(0.0))
}

/// Generate a seeded Cournot instance.
///
/// The interaction matrix is `GᵀG` for a `rank × m` Gaussian factor `G` with
/// entry variance `factor_variance` (default `1/m`, which keeps early iterates
/// of the distributed loops at moderate scale); capacities are uniform on
/// `cap_range`; intercepts follow `cost`. Deterministic per seed.
pub fn build_cournot(
    m: usize,
    rank: usize,
    seed: u64,
    eta: f64,
    cap_range: (f64, f64),
    factor_variance: Option<f64>,
    cost: CostSpec,
) -> Result<CournotParams> {
    if m < 2 {
        return Err(Error::Validation(format!("need at least 2 players, got {m}")));
    }
    if rank == 0 || rank >= m {
        return Err(Error::Validation(format!(
            "factor rank must be in [1, m), got {rank} for m = {m}"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::Validation(format!("smoothing must be positive, got {eta}")));
    }
    let (cap_lo, cap_hi) = cap_range;
    if !(cap_lo > 0.0) || !(cap_hi >= cap_lo) {
        return Err(Error::Validation(format!(
            "cap range ({cap_lo}, {cap_hi}) must be positive and ordered"
        )));
    }
    let fv = factor_variance.unwrap_or(1.0 / m as f64);
    if !(fv > 0.0) {
        return Err(Error::Validation(format!("factor variance must be positive, got {fv}")));
    }
    let mut rng = DrawKey::setup(seed, STREAM_INSTANCE, 0).rng();
    let normal = Normal::new(0.0, fv.sqrt())
        .map_err(|e| Error::Validation(format!("factor distribution: {e}")))?;
    let factor = Array2::from_shape_fn((rank, m), |_| normal.sample(&mut rng));
    let interaction = factor.t().dot(&factor);
    let own_slope = interaction.diag().to_owned();
    let cap_dist = Uniform::new_inclusive(cap_lo, cap_hi)
        .map_err(|e| Error::Validation(format!("cap distribution: {e}")))?;
    let caps = Array1::from_shape_fn(m, |_| cap_dist.sample(&mut rng));
    let (base_cost, cost_noise) = match cost {
        CostSpec::GaussianFixed { mean, variance } => {
            if variance < 0.0 {
                return Err(Error::Validation(format!(
                    "cost variance must be nonnegative, got {variance}"
                )));
            }
            let dist = Normal::new(mean, variance.sqrt())
                .map_err(|e| Error::Validation(format!("cost distribution: {e}")))?;
            (Array1::from_shape_fn(m, |_| dist.sample(&mut rng)), None)
        }
        CostSpec::UniformSampled { lo, hi } => {
            if !(lo <= hi) {
                return Err(Error::Validation(format!(
                    "cost interval [{lo}, {hi}] is empty"
                )));
            }
            (Array1::from_elem(m, 0.5 * (lo + hi)), Some((lo, hi)))
        }
    };
    let welfare_reg = compute_theta_reg(&interaction, &own_slope)?;
    let params = CournotParams {
        interaction,
        own_slope,
        base_cost,
        caps,
        smoothing: eta,
        welfare_reg,
        cost_noise,
    };
    params.check_shape()?;
    Ok(params)
}

/// Behavioral interface of one agent's private evaluations.
///
/// The sampled variants must be unbiased for the deterministic ones and must
/// be pure functions of `(x, key)` — the same key always reproduces the same
/// draw, which is how one noise realization is shared between the map and the
/// gradient within an iteration.
pub trait LocalOracle: Send + Sync {
    /// Decision dimension n.
    fn dim(&self) -> usize;
    /// Deterministic (expected) map component `F_i(x)`.
    fn map(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;
    /// Deterministic (expected) gradient `∇f_i(x)`.
    fn grad(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;
    /// Sampled map `F_i(x, ξ)` with ξ drawn from `key`.
    fn map_sampled(&self, x: ArrayView1<f64>, _key: DrawKey) -> Result<Array1<f64>> {
        self.map(x)
    }
    /// Sampled gradient `∇f_i(x, ξ)` with ξ drawn from `key`.
    fn grad_sampled(&self, x: ArrayView1<f64>, _key: DrawKey) -> Result<Array1<f64>> {
        self.grad(x)
    }
    /// Objective slice `f_i(x)` in closed form (used by gradient checks and
    /// welfare evaluations).
    fn objective(&self, x: ArrayView1<f64>) -> Result<f64>;
}

/// Cournot player backed by shared [`CournotParams`].
pub struct CournotOracle {
    params: Arc<CournotParams>,
    agent: usize,
}

impl LocalOracle for CournotOracle {
    fn dim(&self) -> usize {
        self.params.m()
    }

    fn map(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.params.map_component(self.agent, x)
    }

    fn grad(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.params.grad_component(self.agent, x)
    }

    fn map_sampled(&self, x: ArrayView1<f64>, key: DrawKey) -> Result<Array1<f64>> {
        self.params.map_component_keyed(self.agent, x, Some(key))
    }

    fn grad_sampled(&self, x: ArrayView1<f64>, key: DrawKey) -> Result<Array1<f64>> {
        self.params.grad_component_keyed(self.agent, x, Some(key))
    }

    fn objective(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.params.objective_component(self.agent, x)
    }
}

/// Affine test oracle: `F_i(x) = Mx + p`, `∇f_i(x) = Qx + r`, with objective
/// `½xᵀQx + rᵀx` (meaningful when `Q` is symmetric).
pub struct AffineOracle {
    pub map_matrix: Array2<f64>,
    pub map_offset: Array1<f64>,
    pub grad_matrix: Array2<f64>,
    pub grad_offset: Array1<f64>,
}

impl LocalOracle for AffineOracle {
    fn dim(&self) -> usize {
        self.map_matrix.nrows()
    }

    fn map(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.map_matrix.dot(&x) + &self.map_offset)
    }

    fn grad(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.grad_matrix.dot(&x) + &self.grad_offset)
    }

    fn objective(&self, x: ArrayView1<f64>) -> Result<f64> {
        let qx = self.grad_matrix.dot(&x);
        let quad: f64 = x.iter().zip(qx.iter()).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(self.grad_offset.iter()).map(|(a, b)| a * b).sum();
        Ok(0.5 * quad + lin)
    }
}

/// A full problem: one oracle per agent over a shared decision space.
pub struct ProblemInstance {
    oracles: Vec<Box<dyn LocalOracle>>,
    dim: usize,
    cournot: Option<Arc<CournotParams>>,
}

impl ProblemInstance {
    /// Assemble from explicit oracles; all must agree on the dimension.
    pub fn new(oracles: Vec<Box<dyn LocalOracle>>) -> Result<Self> {
        let dim = oracles
            .first()
            .map(|o| o.dim())
            .ok_or_else(|| Error::Validation("need at least one agent".into()))?;
        if oracles.iter().any(|o| o.dim() != dim) {
            return Err(Error::Dimension("oracles disagree on the dimension".into()));
        }
        Ok(Self { oracles, dim, cournot: None })
    }

    /// One Cournot player per coordinate of the shared decision vector.
    pub fn cournot(params: CournotParams) -> Result<Self> {
        params.check_shape()?;
        let shared = Arc::new(params);
        let oracles: Vec<Box<dyn LocalOracle>> = (0..shared.m())
            .map(|agent| {
                Box::new(CournotOracle { params: Arc::clone(&shared), agent })
                    as Box<dyn LocalOracle>
            })
            .collect();
        Ok(Self { dim: shared.m(), oracles, cournot: Some(shared) })
    }

    /// Single-agent wrapper, mostly for toy problems.
    pub fn single(oracle: Box<dyn LocalOracle>) -> Self {
        let dim = oracle.dim();
        Self { oracles: vec![oracle], dim, cournot: None }
    }

    pub fn agents(&self) -> usize {
        self.oracles.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The shared Cournot parameters when this instance was built from them.
    pub fn cournot_params(&self) -> Option<&CournotParams> {
        self.cournot.as_deref()
    }

    pub fn oracle(&self, i: usize) -> &dyn LocalOracle {
        self.oracles[i].as_ref()
    }

    /// Deterministic stacked map `F(x) = Σ_i F_i(x)`.
    pub fn map_sum(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if let Some(p) = &self.cournot {
            return Ok(p.map_sum(x));
        }
        let mut acc = Array1::zeros(self.dim);
        for o in &self.oracles {
            acc += &o.map(x)?;
        }
        Ok(acc)
    }

    /// Deterministic summed gradient `∇f(x) = Σ_i ∇f_i(x)`.
    pub fn grad_sum(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if let Some(p) = &self.cournot {
            return Ok(p.grad_sum(x));
        }
        let mut acc = Array1::zeros(self.dim);
        for o in &self.oracles {
            acc += &o.grad(x)?;
        }
        Ok(acc)
    }

    /// Total objective `f(x) = Σ_i f_i(x)`.
    pub fn welfare(&self, x: ArrayView1<f64>) -> Result<f64> {
        if let Some(p) = &self.cournot {
            return Ok(p.welfare(x));
        }
        let mut acc = 0.0;
        for o in &self.oracles {
            acc += o.objective(x)?;
        }
        Ok(acc)
    }

    /// The regularized map `F(x) + reg·∇f(x)` whose zeros are the Tikhonov
    /// points.
    pub fn regularized_sum(&self, x: ArrayView1<f64>, reg: f64) -> Result<Array1<f64>> {
        let mut v = self.map_sum(x)?;
        let g = self.grad_sum(x)?;
        v.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += reg * b);
        Ok(v)
    }

    /// Agent `i`'s regularized row `F_i(x) + reg·∇f_i(x)`, sampled when a key
    /// is given (both terms share the key's draw).
    pub fn regularized_row(
        &self,
        i: usize,
        x: ArrayView1<f64>,
        reg: f64,
        key: Option<DrawKey>,
    ) -> Result<Array1<f64>> {
        let o = &self.oracles[i];
        let (mut v, g) = match key {
            Some(key) => (o.map_sampled(x, key)?, o.grad_sampled(x, key)?),
            None => (o.map(x)?, o.grad(x)?),
        };
        v.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += reg * b);
        Ok(v)
    }
}
