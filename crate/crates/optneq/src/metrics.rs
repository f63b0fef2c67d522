//! Trajectory error metrics, CSV logging, path aggregation, and empirical
//! decay-rate fits.
//!
//! The logged quantities are the lower-level residual `‖F(x̄_k)‖₂` (always the
//! deterministic map, so stochastic runs measure distance to the actual
//! solution set rather than sampling noise), the upper-level movement
//! `‖x̄_{k+1} − x̄_k‖₂`, the two consensus errors, and — when reference points
//! are available — distances to the current Tikhonov solution and to the
//! optimal equilibrium. Rate checks use a bound constant `max e_k·(k+Γ)^p`
//! rather than slope equality, because the convergence theory provides upper
//! bounds, not exact rates.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// One logged checkpoint.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricRow {
    /// Iteration count at which the state was logged.
    pub k: u64,
    /// `‖F(x̄_k)‖₂` with the deterministic map.
    pub lower: f64,
    /// `‖x̄_{k+1} − x̄_k‖₂`.
    pub upper: f64,
    /// Frobenius distance of the stack from consensus, `‖X − 1x̄ᵀ‖`.
    pub consensus_x: f64,
    /// Frobenius distance of the trackers from their stationary profile.
    pub consensus_y: f64,
    /// `‖x̄_k − x*_{λ_k}‖₂` when a Tikhonov point was computed at this log.
    pub dist_tikhonov: Option<f64>,
    /// `‖x̄_k − x*‖₂` when the ground-truth endpoint is available.
    pub dist_opt: Option<f64>,
}

/// Columns of [`MetricRow`] addressable by name (CLI `--field`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricField {
    Lower,
    Upper,
    ConsensusX,
    ConsensusY,
    DistTikhonov,
    DistOpt,
}

impl MetricField {
    pub const ALL: [MetricField; 6] = [
        MetricField::Lower,
        MetricField::Upper,
        MetricField::ConsensusX,
        MetricField::ConsensusY,
        MetricField::DistTikhonov,
        MetricField::DistOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricField::Lower => "lower",
            MetricField::Upper => "upper",
            MetricField::ConsensusX => "consensus_x",
            MetricField::ConsensusY => "consensus_y",
            MetricField::DistTikhonov => "dist_tikhonov",
            MetricField::DistOpt => "dist_opt",
        }
    }
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown metric field {s:?}; expected one of lower, upper, consensus_x, \
                     consensus_y, dist_tikhonov, dist_opt"
                ))
            })
    }
}

impl MetricRow {
    /// Value of the given column; `None` for reference distances that were
    /// not computed at this checkpoint.
    pub fn field(&self, f: MetricField) -> Option<f64> {
        match f {
            MetricField::Lower => Some(self.lower),
            MetricField::Upper => Some(self.upper),
            MetricField::ConsensusX => Some(self.consensus_x),
            MetricField::ConsensusY => Some(self.consensus_y),
            MetricField::DistTikhonov => self.dist_tikhonov,
            MetricField::DistOpt => self.dist_opt,
        }
    }
}

/// Network average of a stacked state: `uᵀX/m` for a weight vector scaled to
/// sum `m`, or the plain column mean when no weights are given.
pub fn weighted_average(x: &Array2<f64>, weights: Option<&Array1<f64>>) -> Array1<f64> {
    let m = x.nrows() as f64;
    match weights {
        Some(u) => u.dot(x) / m,
        None => x.sum_axis(Axis(0)) / m,
    }
}

/// Frobenius distance of the stack from the consensus profile `1x̄ᵀ`.
pub fn consensus_gap_x(x: &Array2<f64>, average: ArrayView1<f64>) -> f64 {
    let mut sq = 0.0;
    for row in x.rows() {
        for (a, b) in row.iter().zip(average.iter()) {
            sq += (a - b) * (a - b);
        }
    }
    sq.sqrt()
}

/// Frobenius distance of the trackers from their stationary rank-one profile
/// `v·ȳᵀ` with `ȳ` the column mean; `v` defaults to all-ones (undirected
/// case). `v` is expected scaled to sum `m`, so the profile is consistent
/// with the column mean of `Y`.
pub fn consensus_gap_y(y: &Array2<f64>, profile: Option<&Array1<f64>>) -> f64 {
    let m = y.nrows() as f64;
    let ybar = y.sum_axis(Axis(0)) / m;
    let mut sq = 0.0;
    for (i, row) in y.rows().into_iter().enumerate() {
        let vi = profile.map_or(1.0, |v| v[i]);
        for (a, b) in row.iter().zip(ybar.iter()) {
            let d = a - vi * b;
            sq += d * d;
        }
    }
    sq.sqrt()
}

/// Assemble one checkpoint row from a logged state.
///
/// `pull_weights` is the stationary weighting of the decision average (`None`
/// means uniform), `push_profile` the stationary tracker profile (`None`
/// means all-ones). `next_average` is the network average of the following
/// iterate; the caller obtains it by peeking one step ahead. The reference
/// points, when given, were computed by the caller (the Tikhonov point at the
/// current regularization weight, and the sweep endpoint).
#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    k: u64,
    x: &Array2<f64>,
    y: &Array2<f64>,
    pull_weights: Option<&Array1<f64>>,
    push_profile: Option<&Array1<f64>>,
    inst: &ProblemInstance,
    next_average: ArrayView1<f64>,
    tikhonov_point: Option<ArrayView1<f64>>,
    opt_point: Option<ArrayView1<f64>>,
) -> Result<MetricRow> {
    let xbar = weighted_average(x, pull_weights);
    let residual = inst.map_sum(xbar.view())?;
    let dist = |p: ArrayView1<f64>| -> f64 {
        xbar.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let row = MetricRow {
        k,
        lower: residual.iter().map(|t| t * t).sum::<f64>().sqrt(),
        upper: next_average
            .iter()
            .zip(xbar.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        consensus_x: consensus_gap_x(x, xbar.view()),
        consensus_y: consensus_gap_y(y, push_profile),
        dist_tikhonov: tikhonov_point.map(dist),
        dist_opt: opt_point.map(dist),
    };
    let finite = [row.lower, row.upper, row.consensus_x, row.consensus_y]
        .into_iter()
        .chain(row.dist_tikhonov)
        .chain(row.dist_opt)
        .all(|t| t.is_finite());
    if !finite {
        return Err(Error::Numerical(format!("non-finite metric at k = {k}")));
    }
    Ok(row)
}

/// Exact column order of the CSV logs.
pub const CSV_HEADER: &str = "k,lower,upper,consensus_x,consensus_y,dist_tikhonov,dist_opt";

fn push_float(out: &mut String, v: f64) {
    use fmt::Write;
    write!(out, "{v}").expect("writing to a String cannot fail");
}

/// Render rows to CSV text. Floats use the shortest round-trip decimal form,
/// so equal trajectories serialize to identical bytes; missing reference
/// distances become empty cells.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        use fmt::Write;
        write!(out, "{}", r.k).expect("writing to a String cannot fail");
        for v in [r.lower, r.upper, r.consensus_x, r.consensus_y] {
            out.push(',');
            push_float(&mut out, v);
        }
        for v in [r.dist_tikhonov, r.dist_opt] {
            out.push(',');
            if let Some(v) = v {
                push_float(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

fn parse_required(cell: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        Error::Parse(format!("line {line}: {what} is not a number: {cell:?}"))
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Parse(format!(
            "line {line}: {what} must be finite and nonnegative, got {cell:?}"
        )));
    }
    Ok(v)
}

fn parse_optional(cell: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        return Ok(None);
    }
    parse_required(cell, line, what).map(Some)
}

/// Parse CSV text produced by [`rows_to_csv`]. Strict: the header must match
/// exactly, every row needs all seven cells, and values must be finite and
/// nonnegative.
pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse(format!("unexpected CSV header: {h:?}")));
        }
        None => return Err(Error::Parse("empty CSV".into())),
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::Parse(format!(
                "line {line}: expected 7 cells, found {}",
                cells.len()
            )));
        }
        let k: u64 = cells[0].trim().parse().map_err(|_| {
            Error::Parse(format!("line {line}: bad iteration index {:?}", cells[0]))
        })?;
        rows.push(MetricRow {
            k,
            lower: parse_required(cells[1], line, "lower")?,
            upper: parse_required(cells[2], line, "upper")?,
            consensus_x: parse_required(cells[3], line, "consensus_x")?,
            consensus_y: parse_required(cells[4], line, "consensus_y")?,
            dist_tikhonov: parse_optional(cells[5], line, "dist_tikhonov")?,
            dist_opt: parse_optional(cells[6], line, "dist_opt")?,
        });
    }
    Ok(rows)
}

/// Result of an empirical decay fit over a window of checkpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RateFit {
    /// Iteration window the fit used.
    pub window: (u64, u64),
    /// Least-squares slope of `log e_k` against `log(k+Γ)`; a clean decay at
    /// rate `p` shows up as a slope near `−p` or steeper.
    pub slope: f64,
    /// `max e_k·(k+Γ)^p` over the window — bounded iff the decay keeps up
    /// with the target exponent.
    pub bound_const: f64,
}

/// Fit the decay of one metric field over `window = (k_lo, k_hi)` against the
/// shifted index `k + gamma`.
pub fn fit_decay(
    rows: &[MetricRow],
    field: MetricField,
    window: (u64, u64),
    target_exponent: f64,
    gamma: f64,
) -> Result<RateFit> {
    if window.1 < window.0 {
        return Err(Error::Validation(format!(
            "window {}..{} is reversed",
            window.0, window.1
        )));
    }
    if !gamma.is_finite() {
        return Err(Error::Validation(format!("gamma must be finite, got {gamma}")));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut bound: f64 = 0.0;
    for r in rows {
        if r.k < window.0 || r.k > window.1 {
            continue;
        }
        let Some(e) = r.field(field) else { continue };
        if !(e > 0.0) {
            return Err(Error::Validation(format!(
                "{field} is not positive at k = {} (value {e}); cannot fit a log-log decay",
                r.k
            )));
        }
        let shifted = r.k as f64 + gamma;
        if !(shifted > 0.0) {
            return Err(Error::Validation(format!(
                "k + gamma = {shifted} at k = {} is not positive",
                r.k
            )));
        }
        ts.push(shifted.ln());
        ys.push(e.ln());
        bound = bound.max(e * shifted.powf(target_exponent));
    }
    if ts.len() < 2 {
        return Err(Error::Validation(format!(
            "window {}..{} holds {} logged {field} values; need at least 2",
            window.0,
            window.1,
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    if den == 0.0 {
        return Err(Error::Validation(
            "all window rows share one iteration index; cannot fit a slope".into(),
        ));
    }
    Ok(RateFit { window, slope: num / den, bound_const: bound })
}

/// Per-iteration mean and envelope across aligned sample paths.
#[derive(Debug, Clone)]
pub struct PathAggregate {
    /// Arithmetic mean of every field per checkpoint.
    pub mean: Vec<MetricRow>,
    /// Pointwise minimum (dispersion display).
    pub min: Vec<MetricRow>,
    /// Pointwise maximum (dispersion display).
    pub max: Vec<MetricRow>,
}

/// Aggregate sample paths logged at identical iteration indices. Reference
/// distances are averaged over the paths that computed them.
pub fn aggregate_paths(runs: &[Vec<MetricRow>]) -> Result<PathAggregate> {
    let Some(first) = runs.first() else {
        return Err(Error::Validation("no sample paths to aggregate".into()));
    };
    for (p, run) in runs.iter().enumerate() {
        if run.len() != first.len() {
            return Err(Error::Dimension(format!(
                "path {p} logged {} checkpoints, path 0 logged {}",
                run.len(),
                first.len()
            )));
        }
        for (row, lead) in run.iter().zip(first) {
            if row.k != lead.k {
                return Err(Error::Dimension(format!(
                    "path {p} logged k = {} where path 0 logged k = {}",
                    row.k, lead.k
                )));
            }
        }
    }
    let mut mean = Vec::with_capacity(first.len());
    let mut min = Vec::with_capacity(first.len());
    let mut max = Vec::with_capacity(first.len());
    for idx in 0..first.len() {
        let k = first[idx].k;
        let collect = |f: MetricField| -> Vec<f64> {
            runs.iter().filter_map(|run| run[idx].field(f)).collect()
        };
        let stats = |f: MetricField| -> (Option<f64>, Option<f64>, Option<f64>) {
            let vals = collect(f);
            if vals.is_empty() {
                return (None, None, None);
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (Some(mean), Some(lo), Some(hi))
        };
        let assemble = |pick: fn((Option<f64>, Option<f64>, Option<f64>)) -> Option<f64>|
         -> MetricRow {
            MetricRow {
                k,
                lower: pick(stats(MetricField::Lower)).unwrap_or(0.0),
                upper: pick(stats(MetricField::Upper)).unwrap_or(0.0),
                consensus_x: pick(stats(MetricField::ConsensusX)).unwrap_or(0.0),
                consensus_y: pick(stats(MetricField::ConsensusY)).unwrap_or(0.0),
                dist_tikhonov: pick(stats(MetricField::DistTikhonov)),
                dist_opt: pick(stats(MetricField::DistOpt)),
            }
        };
        mean.push(assemble(|s| s.0));
        min.push(assemble(|s| s.1));
        max.push(assemble(|s| s.2));
    }
    Ok(PathAggregate { mean, min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::AffineOracle;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn uniform_average_and_consensus_of_a_two_agent_stack() {
        let x = array![[1.0], [3.0]];
        let xbar = weighted_average(&x, None);
        assert_eq!(xbar, array![2.0]);
        assert!((consensus_gap_x(&x, xbar.view()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_average_uses_the_stationary_weights() {
        let x = array![[1.0, 0.0], [3.0, 2.0]];
        let u = array![2.0, 0.0];
        assert_eq!(weighted_average(&x, Some(&u)), array![1.0, 0.0]);
    }

    #[test]
    fn consensus_is_zero_on_an_exact_consensus_stack() {
        let x = Array2::from_elem((4, 3), 7.5);
        let xbar = weighted_average(&x, None);
        assert_eq!(consensus_gap_x(&x, xbar.view()), 0.0);
    }

    #[test]
    fn tracker_gap_vanishes_on_the_stationary_profile() {
        let v = array![1.5, 0.5];
        let c = array![2.0, -3.0];
        let y = array![
            [v[0] * c[0], v[0] * c[1]],
            [v[1] * c[0], v[1] * c[1]]
        ];
        assert!(consensus_gap_y(&y, Some(&v)) < 1e-14);
        let uniform = array![[2.0, -3.0], [2.0, -3.0]];
        assert_eq!(consensus_gap_y(&uniform, None), 0.0);
    }

    fn toy_instance() -> ProblemInstance {
        ProblemInstance::single(Box::new(AffineOracle {
            map_matrix: array![[0.0, 1.0], [-1.0, 0.0]],
            map_offset: Array1::zeros(2),
            grad_matrix: Array2::eye(2),
            grad_offset: array![-1.0, -1.0],
        }))
    }

    #[test]
    fn compute_metrics_fills_every_column() {
        let inst = toy_instance();
        let x = array![[3.0, 4.0]];
        let y = array![[1.0, 1.0]];
        let next = array![2.0, 4.0];
        let tik = array![0.0, 4.0];
        let opt = array![0.0, 0.0];
        let row = compute_metrics(
            7,
            &x,
            &y,
            None,
            None,
            &inst,
            next.view(),
            Some(tik.view()),
            Some(opt.view()),
        )
        .unwrap();
        assert_eq!(row.k, 7);
        // x̄ = (3,4): F(x̄) = (4, −3) so the lower residual is 5.
        assert!((row.lower - 5.0).abs() < 1e-15);
        assert!((row.upper - 1.0).abs() < 1e-15);
        assert_eq!(row.consensus_x, 0.0);
        assert_eq!(row.consensus_y, 0.0);
        assert!((row.dist_tikhonov.unwrap() - 3.0).abs() < 1e-15);
        assert!((row.dist_opt.unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn compute_metrics_rejects_non_finite_states() {
        let inst = toy_instance();
        let x = array![[f64::INFINITY, 0.0]];
        let y = array![[0.0, 0.0]];
        let next = array![0.0, 0.0];
        let err =
            compute_metrics(0, &x, &y, None, None, &inst, next.view(), None, None).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    fn sample_rows() -> Vec<MetricRow> {
        vec![
            MetricRow {
                k: 0,
                lower: 1.5,
                upper: 0.25,
                consensus_x: 3.0,
                consensus_y: 0.125,
                dist_tikhonov: Some(0.0625),
                dist_opt: None,
            },
            MetricRow {
                k: 100,
                lower: 0.1,
                upper: 0.01,
                consensus_x: 0.3,
                consensus_y: 0.001,
                dist_tikhonov: None,
                dist_opt: Some(12.5),
            },
        ]
    }

    #[test]
    fn csv_round_trips_and_leaves_missing_cells_empty() {
        let rows = sample_rows();
        let text = rows_to_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0,1.5,0.25,3,0.125,0.0625,");
        assert_eq!(lines.next().unwrap(), "100,0.1,0.01,0.3,0.001,,12.5");
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn csv_serialization_is_deterministic() {
        let rows = sample_rows();
        assert_eq!(rows_to_csv(&rows), rows_to_csv(&rows.clone()));
    }

    #[test]
    fn parser_rejects_malformed_input() {
        let bad = [
            "",
            "k,lower\n",
            "wrong,header,line,entirely,not,matching,anything\n",
            &format!("{CSV_HEADER}\n1,2,3\n"),
            &format!("{CSV_HEADER}\nx,1,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n-1,1,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n1,oops,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n1,-2,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n1,inf,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n1,NaN,1,1,1,,\n"),
            &format!("{CSV_HEADER}\n1,1,1,1,1,-0.5,\n"),
        ];
        for text in bad {
            assert!(parse_csv(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn parser_tolerates_crlf_and_trailing_blank_lines() {
        let text = format!("{CSV_HEADER}\r\n5,1,1,1,1,,\r\n\r\n");
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].k, 5);
    }

    fn power_law_rows(gamma: f64, coef: f64, exp: f64) -> Vec<MetricRow> {
        (1..=200u64)
            .map(|i| {
                let k = i * 10;
                let e = coef * (k as f64 + gamma).powf(-exp);
                MetricRow {
                    k,
                    lower: e,
                    upper: e,
                    consensus_x: e,
                    consensus_y: e,
                    dist_tikhonov: None,
                    dist_opt: None,
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_an_exact_power_law() {
        let rows = power_law_rows(10.0, 1.0, 0.2);
        let fit =
            fit_decay(&rows, MetricField::ConsensusX, (10, 2000), 0.2, 10.0).unwrap();
        assert!((fit.slope + 0.2).abs() < 1e-6, "slope {}", fit.slope);
        assert!((fit.bound_const - 1.0).abs() < 1e-9);
    }

    #[test]
    fn faster_decay_shrinks_the_bound_constant_across_halves() {
        let rows = power_law_rows(10.0, 5.0, 0.5);
        let first =
            fit_decay(&rows, MetricField::Lower, (10, 1000), 0.2, 10.0).unwrap();
        let second =
            fit_decay(&rows, MetricField::Lower, (1010, 2000), 0.2, 10.0).unwrap();
        assert!(second.bound_const < first.bound_const);
    }

    #[test]
    fn constant_series_grows_the_bound_constant() {
        let rows = power_law_rows(10.0, 1.0, 0.0);
        let first =
            fit_decay(&rows, MetricField::Lower, (10, 1000), 0.2, 10.0).unwrap();
        let second =
            fit_decay(&rows, MetricField::Lower, (1010, 2000), 0.2, 10.0).unwrap();
        assert!(second.bound_const > 1.05 * first.bound_const);
    }

    #[test]
    fn fit_rejects_empty_windows_and_nonpositive_values() {
        let rows = power_law_rows(10.0, 1.0, 0.2);
        assert!(fit_decay(&rows, MetricField::Lower, (3000, 4000), 0.2, 10.0).is_err());
        assert!(fit_decay(&rows, MetricField::Lower, (100, 50), 0.2, 10.0).is_err());
        assert!(
            fit_decay(&rows, MetricField::DistOpt, (10, 2000), 0.2, 10.0).is_err(),
            "field with no logged values"
        );
        let mut zeroed = rows;
        zeroed[5].lower = 0.0;
        assert!(fit_decay(&zeroed, MetricField::Lower, (10, 2000), 0.2, 10.0).is_err());
    }

    #[test]
    fn aggregation_means_fields_and_keeps_the_envelope() {
        let a = vec![MetricRow {
            k: 10,
            lower: 1.0,
            upper: 1.0,
            consensus_x: 1.0,
            consensus_y: 1.0,
            dist_tikhonov: Some(2.0),
            dist_opt: None,
        }];
        let b = vec![MetricRow {
            k: 10,
            lower: 3.0,
            upper: 3.0,
            consensus_x: 3.0,
            consensus_y: 3.0,
            dist_tikhonov: None,
            dist_opt: None,
        }];
        let agg = aggregate_paths(&[a.clone(), b]).unwrap();
        assert_eq!(agg.mean[0].lower, 2.0);
        assert_eq!(agg.min[0].lower, 1.0);
        assert_eq!(agg.max[0].lower, 3.0);
        // Only one path computed the reference distance; its value carries.
        assert_eq!(agg.mean[0].dist_tikhonov, Some(2.0));
        assert_eq!(agg.mean[0].dist_opt, None);

        let identical = aggregate_paths(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(identical.mean, a);
    }

    #[test]
    fn aggregation_rejects_misaligned_paths() {
        let a = sample_rows();
        let mut b = sample_rows();
        b[1].k = 99;
        assert!(aggregate_paths(&[a.clone(), b]).is_err());
        let short = vec![a[0].clone()];
        assert!(aggregate_paths(&[a, short]).is_err());
        assert!(aggregate_paths(&[]).is_err());
    }

    #[test]
    fn mean_curve_tracks_the_truth_better_than_any_single_path() {
        // Ten noisy copies of a power law: averaging must reduce the
        // mean-square deviation from the truth.
        use rand::Rng;
        let mut rng = crate::rng::DrawKey::setup(5, crate::rng::STREAM_INIT, 0).rng();
        let truth: Vec<f64> =
            (1..=50).map(|k| 10.0 * (k as f64 + 10.0).powf(-0.5)).collect();
        let paths: Vec<Vec<MetricRow>> = (0..10)
            .map(|_| {
                truth
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let noisy = t * (1.0 + 0.3 * (rng.random::<f64>() - 0.5));
                        MetricRow {
                            k: (i + 1) as u64,
                            lower: noisy,
                            upper: noisy,
                            consensus_x: noisy,
                            consensus_y: noisy,
                            dist_tikhonov: None,
                            dist_opt: None,
                        }
                    })
                    .collect()
            })
            .collect();
        let agg = aggregate_paths(&paths).unwrap();
        let mse = |rows: &[MetricRow]| -> f64 {
            rows.iter()
                .zip(&truth)
                .map(|(r, t)| (r.lower - t) * (r.lower - t))
                .sum::<f64>()
        };
        let mean_mse = mse(&agg.mean);
        let best_path = paths.iter().map(|p| mse(p)).fold(f64::INFINITY, f64::min);
        assert!(mean_mse < best_path, "mean {mean_mse} vs best path {best_path}");
    }

    #[test]
    fn field_names_round_trip() {
        for f in MetricField::ALL {
            assert_eq!(f.name().parse::<MetricField>().unwrap(), f);
        }
        assert!("frobnication".parse::<MetricField>().is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trips_arbitrary_rows(
            rows in proptest::collection::vec(
                (any::<u64>(), proptest::collection::vec(0.0f64..1e12, 4),
                 proptest::option::of(0.0f64..1e6), proptest::option::of(0.0f64..1e6)),
                0..20,
            )
        ) {
            let rows: Vec<MetricRow> = rows
                .into_iter()
                .map(|(k, v, dt, dp)| MetricRow {
                    k,
                    lower: v[0],
                    upper: v[1],
                    consensus_x: v[2],
                    consensus_y: v[3],
                    dist_tikhonov: dt,
                    dist_opt: dp,
                })
                .collect();
            let parsed = parse_csv(&rows_to_csv(&rows)).unwrap();
            prop_assert_eq!(parsed, rows);
        }

        #[test]
        fn parser_never_panics(text in "\\PC*") {
            let _ = parse_csv(&text);
        }
    }
}
