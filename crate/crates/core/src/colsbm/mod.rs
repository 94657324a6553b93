//! Shared-parameter Bernoulli stochastic block model for a collection of
//! undirected graphs with NA dyads.
//!
//! Every network in the collection is modelled with one common group
//! proportion vector `rho` and connection matrix `alpha`; node memberships
//! are network-local (vessel identity is used only for initialization and
//! reporting). Inference maximizes a mean-field variational bound by
//! coordinate ascent: node-wise posterior updates (VE) alternate with
//! closed-form parameter updates (M). NA dyads contribute nothing to the
//! likelihood. A BIC-style penalized criterion over observed dyads and node
//! instances selects the number of groups.

mod spectral;

pub use spectral::spectral_init;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proximity::GraphCollection;
use crate::rng::substream;

/// Connection probabilities are clamped to `[EPS_P, 1 - EPS_P]` to keep
/// log-likelihoods finite.
pub const EPS_P: f64 = 1e-6;

const RHO_FLOOR: f64 = 1e-10;
const BOUND_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 500;

#[derive(Debug, Error)]
pub enum SbmError {
    #[error("collection has no non-empty graphs")]
    EmptyCollection,
    #[error("number of groups must be >= 1")]
    BadGroupCount,
    #[error("R range is empty")]
    EmptyRange,
    #[error("labelings have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("partition part {part} is empty")]
    EmptyPartition { part: usize },
    #[error("partition must cover every graph exactly once (graph {graph})")]
    NotAPartition { graph: usize },
    #[error("non-finite value in {site}")]
    NonFinite { site: String },
}

/// Block proportions and the symmetric connection matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub rho: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
}

impl SbmParams {
    pub fn r(&self) -> usize {
        self.rho.len()
    }
}

/// Soft group memberships: `tau[network][node][group]`, rows on the simplex.
pub type TauAssignments = Vec<Vec<Vec<f64>>>;

/// One fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmFit {
    pub r: usize,
    pub params: SbmParams,
    pub tau: TauAssignments,
    /// Final variational bound.
    pub bound: f64,
    /// Penalized selection criterion.
    pub criterion: f64,
    /// Bound after every EM iteration of the winning initialization.
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl SbmFit {
    /// Hard assignments: `argmax_r tau` per network and node.
    pub fn map_assignments(&self) -> Vec<Vec<usize>> {
        self.tau
            .iter()
            .map(|net| net.iter().map(|row| argmax(row)).collect())
            .collect()
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `x * ln(y)` with the `0 * ln(0) = 0` convention.
#[inline]
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Bernoulli log-density of one observed dyad.
#[inline]
fn dyad_loglik(edge: bool, alpha: f64) -> f64 {
    if edge {
        alpha.ln()
    } else {
        (1.0 - alpha).ln()
    }
}

/// Mean-field variational bound of the collection under `(params, tau)`.
pub fn bound(coll: &GraphCollection, params: &SbmParams, tau: &TauAssignments) -> f64 {
    let r = params.r();
    let mut total = 0.0;
    for (g, net_tau) in coll.graphs.iter().zip(tau) {
        for row in net_tau {
            for k in 0..r {
                total += xlny(row[k], params.rho[k]) - xlny(row[k], row[k]);
            }
        }
        for (i, j, edge) in g.observed_dyads() {
            for k in 0..r {
                if net_tau[i][k] == 0.0 {
                    continue;
                }
                for l in 0..r {
                    total += net_tau[i][k] * net_tau[j][l] * dyad_loglik(edge, params.alpha[k][l]);
                }
            }
        }
    }
    total
}

/// One full VE sweep: sequential node-wise posterior updates (within each
/// network, in node order), each row renormalized through log-sum-exp.
/// Sequential updates make every step an exact coordinate ascent.
pub fn ve_step(
    coll: &GraphCollection,
    params: &SbmParams,
    tau: &TauAssignments,
) -> Result<TauAssignments, SbmError> {
    let r = params.r();
    let log_rho: Vec<f64> = params.rho.iter().map(|p| p.ln()).collect();
    let mut out = tau.clone();
    for (g, net_tau) in coll.graphs.iter().zip(out.iter_mut()) {
        let n = g.n();
        for b in 0..n {
            let mut scores = log_rho.clone();
            for b2 in 0..n {
                if b2 == b {
                    continue;
                }
                let Some(edge) = g.dyad(b, b2) else {
                    continue;
                };
                for (k, score) in scores.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for l in 0..r {
                        acc += net_tau[b2][l] * dyad_loglik(edge, params.alpha[k][l]);
                    }
                    *score += acc;
                }
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(SbmError::NonFinite { site: format!("ve update of node {b}") });
            }
            let mut z = 0.0;
            for s in &mut scores {
                *s = (*s - max).exp();
                z += *s;
            }
            for (k, s) in scores.iter().enumerate() {
                net_tau[b][k] = s / z;
            }
        }
    }
    Ok(out)
}

/// Closed-form M step: `rho` as the mean membership, `alpha` as the
/// tau-weighted edge frequency over observed dyads, clamped to
/// `[EPS_P, 1 - EPS_P]`. A block with no observed dyad mass falls back
/// to 0.5 with a warning.
pub fn m_step(coll: &GraphCollection, tau: &TauAssignments) -> SbmParams {
    let r = tau
        .iter()
        .flat_map(|net| net.first())
        .map(Vec::len)
        .next()
        .unwrap_or(1);
    let mut rho = vec![0.0; r];
    let mut nodes = 0usize;
    for net in tau {
        for row in net {
            for k in 0..r {
                rho[k] += row[k];
            }
            nodes += 1;
        }
    }
    for p in &mut rho {
        *p = (*p / nodes as f64).max(RHO_FLOOR);
    }
    let z: f64 = rho.iter().sum();
    for p in &mut rho {
        *p /= z;
    }

    let mut num = vec![vec![0.0; r]; r];
    let mut den = vec![vec![0.0; r]; r];
    for (g, net_tau) in coll.graphs.iter().zip(tau) {
        for (i, j, edge) in g.observed_dyads() {
            let a = f64::from(edge);
            for k in 0..r {
                for l in 0..r {
                    // both orientations of the unordered dyad
                    let w = net_tau[i][k] * net_tau[j][l] + net_tau[j][k] * net_tau[i][l];
                    den[k][l] += w;
                    num[k][l] += w * a;
                }
            }
        }
    }
    let mut alpha = vec![vec![0.0; r]; r];
    for k in 0..r {
        for l in 0..r {
            alpha[k][l] = if den[k][l] > 0.0 {
                (num[k][l] / den[k][l]).clamp(EPS_P, 1.0 - EPS_P)
            } else {
                log::warn!("block ({k},{l}) has no observed dyad mass; falling back to 0.5");
                0.5
            };
        }
    }
    SbmParams { rho, alpha }
}

fn random_tau(coll: &GraphCollection, r: usize, rng: &mut impl Rng) -> TauAssignments {
    coll.graphs
        .iter()
        .map(|g| {
            (0..g.n())
                .map(|_| {
                    let mut row: Vec<f64> = (0..r).map(|_| -rng.gen::<f64>().ln()).collect();
                    let z: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= z);
                    row
                })
                .collect()
        })
        .collect()
}

fn run_em(
    coll: &GraphCollection,
    mut tau: TauAssignments,
) -> Result<(SbmParams, TauAssignments, Vec<f64>), SbmError> {
    let mut params = m_step(coll, &tau);
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERS {
        tau = ve_step(coll, &params, &tau)?;
        params = m_step(coll, &tau);
        let b = bound(coll, &params, &tau);
        if !b.is_finite() {
            return Err(SbmError::NonFinite { site: "bound".into() });
        }
        trace.push(b);
        if b - prev < BOUND_TOL && prev.is_finite() {
            break;
        }
        prev = b;
    }
    Ok((params, tau, trace))
}

/// Observed unordered dyads and node instances of the collection; the sample
/// sizes of the penalty terms.
pub fn collection_sizes(coll: &GraphCollection) -> (usize, usize) {
    let (observed, _) = coll.dyad_counts();
    let nodes = coll.graphs.iter().map(|g| g.n()).sum();
    (observed, nodes)
}

/// BIC-style penalized criterion:
/// `bound - (R(R+1)/2) ln(n_dyads)/2 - (R-1) ln(n_nodes)/2`.
pub fn criterion(bound: f64, r: usize, n_dyads: usize, n_nodes: usize) -> f64 {
    let pair_params = (r * (r + 1) / 2) as f64;
    bound
        - 0.5 * pair_params * (n_dyads.max(1) as f64).ln()
        - 0.5 * (r as f64 - 1.0) * (n_nodes.max(1) as f64).ln()
}

/// Fit the model with `r` groups: one spectral initialization plus
/// `n_init - 1` random restarts, keeping the best final bound.
/// Deterministic per seed.
pub fn fit(coll: &GraphCollection, r: usize, n_init: usize, seed: u64) -> Result<SbmFit, SbmError> {
    if r == 0 {
        return Err(SbmError::BadGroupCount);
    }
    if coll.is_empty() || coll.graphs.iter().all(|g| g.n() == 0) {
        return Err(SbmError::EmptyCollection);
    }
    let (n_dyads, n_nodes) = collection_sizes(coll);
    let mut best: Option<SbmFit> = None;
    for init in 0..n_init.max(1) {
        let tau0 = if init == 0 {
            spectral_init(coll, r, seed)
        } else {
            let mut rng = substream(seed, &format!("sbm.init.r{r}.{init}"));
            random_tau(coll, r, &mut rng)
        };
        let (params, tau, trace) = run_em(coll, tau0)?;
        let b = *trace.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|f| b > f.bound) {
            best = Some(SbmFit {
                r,
                params,
                tau,
                bound: b,
                criterion: criterion(b, r, n_dyads, n_nodes),
                iterations: trace.len(),
                bound_trace: trace,
                seed,
            });
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Criterion table row of [`select_r`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub r: usize,
    pub bound: f64,
    pub criterion: f64,
}

/// Fit every `r` in the range and keep the criterion maximizer (ties to the
/// smaller `r`).
pub fn select_r(
    coll: &GraphCollection,
    r_range: impl IntoIterator<Item = usize>,
    n_init: usize,
    seed: u64,
) -> Result<(SbmFit, Vec<CriterionRow>), SbmError> {
    let mut table = Vec::new();
    let mut best: Option<SbmFit> = None;
    for r in r_range {
        let f = fit(coll, r, n_init, seed)?;
        table.push(CriterionRow { r, bound: f.bound, criterion: f.criterion });
        if best.as_ref().is_none_or(|b| f.criterion > b.criterion) {
            best = Some(f);
        }
    }
    best.map(|f| (f, table)).ok_or(SbmError::EmptyRange)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    Joint,
    Split,
    Tie,
}

/// Criterion comparison between one joint fit of the collection and
/// independent fits of user-specified sub-collections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionComparison {
    pub joint_criterion: f64,
    pub joint_r: usize,
    pub split_criterion: f64,
    pub per_part: Vec<CriterionRow>,
    pub preferred: Preference,
}

/// Compare a disjoint cover of the collection against the joint fit. Every
/// fit uses the same seed and R range, so the trivial partition ties the
/// joint fit exactly.
pub fn compare_partitions(
    coll: &GraphCollection,
    partition: &[Vec<usize>],
    r_range: std::ops::RangeInclusive<usize>,
    n_init: usize,
    seed: u64,
) -> Result<PartitionComparison, SbmError> {
    let mut seen = vec![false; coll.len()];
    for (p, part) in partition.iter().enumerate() {
        if part.is_empty() {
            return Err(SbmError::EmptyPartition { part: p });
        }
        for &g in part {
            if g >= coll.len() || seen[g] {
                return Err(SbmError::NotAPartition { graph: g });
            }
            seen[g] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(SbmError::NotAPartition { graph: missing });
    }

    let (joint, _) = select_r(coll, r_range.clone(), n_init, seed)?;
    let mut per_part = Vec::with_capacity(partition.len());
    let mut split_criterion = 0.0;
    for part in partition {
        let sub = GraphCollection::new(part.iter().map(|&g| coll.graphs[g].clone()).collect());
        let (f, _) = select_r(&sub, r_range.clone(), n_init, seed)?;
        split_criterion += f.criterion;
        per_part.push(CriterionRow { r: f.r, bound: f.bound, criterion: f.criterion });
    }
    let preferred = if split_criterion > joint.criterion {
        Preference::Split
    } else if split_criterion < joint.criterion {
        Preference::Joint
    } else {
        Preference::Tie
    };
    Ok(PartitionComparison {
        joint_criterion: joint.criterion,
        joint_r: joint.r,
        split_criterion,
        per_part,
        preferred,
    })
}

/// Adjusted Rand index between two labelings.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64, SbmError> {
    if labels_a.len() != labels_b.len() {
        return Err(SbmError::LengthMismatch { a: labels_a.len(), b: labels_b.len() });
    }
    let n = labels_a.len();
    if n == 0 {
        return Ok(1.0);
    }
    let ka = labels_a.iter().max().map_or(0, |m| m + 1);
    let kb = labels_b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        table[a][b] += 1;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = (0..ka).map(|i| choose2(table[i].iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2((0..ka).map(|i| table[i][j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Synthetic benchmark: a collection of graphs drawn from one planted block
/// structure with shared node labels across networks.
pub fn planted_collection(
    n_networks: usize,
    n_nodes: usize,
    r: usize,
    alpha_within: f64,
    alpha_between: f64,
    seed: u64,
) -> (GraphCollection, Vec<usize>) {
    let labels: Vec<usize> = (0..n_nodes).map(|i| i % r).collect();
    let mut rng = substream(seed, "sbm.planted");
    let mut graphs = Vec::with_capacity(n_networks);
    for g in 0..n_networks {
        let vessels: Vec<String> = (0..n_nodes).map(crate::trajdata::vessel_name).collect();
        let mut rows = Vec::new();
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                let p = if labels[i] == labels[j] { alpha_within } else { alpha_between };
                rows.push((i, j, rng.gen::<f64>() < p));
            }
        }
        graphs.push(graph_from_dyads(&format!("net{g:02}"), vessels, &rows));
    }
    (GraphCollection::new(graphs), labels)
}

/// Assemble a graph from explicit dyads (used by generators and tests);
/// unlisted pairs stay NA.
pub fn graph_from_dyads(
    period: &str,
    vessels: Vec<String>,
    dyads: &[(usize, usize, bool)],
) -> crate::proximity::ProximityGraph {
    let mut g = crate::proximity::ProximityGraph::empty(period, vessels);
    for &(i, j, e) in dyads {
        g.set(i, j, Some(e));
    }
    g
}

#[cfg(test)]
mod tests;
