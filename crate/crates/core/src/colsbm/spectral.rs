//! Spectral initialization on the vessel-aligned mean adjacency.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use super::TauAssignments;
use crate::proximity::GraphCollection;
use crate::rng::substream;

/// Initial soft memberships from spectral clustering of the mean adjacency.
///
/// Dyads are averaged across networks by global vessel identity; pairs never
/// observed (and the diagonal) are imputed with the overall observed edge
/// density. Rows of the leading-|eigenvalue| eigenvector embedding are
/// clustered with seeded k-means; cluster labels become near-hard rows
/// (0.9 on the cluster, the rest spread).
pub fn spectral_init(coll: &GraphCollection, r: usize, seed: u64) -> TauAssignments {
    let roster = coll.roster();
    if r == 1 || roster.len() <= r {
        // degenerate sizes: near-uniform rows, nothing to cluster
        return coll
            .graphs
            .iter()
            .map(|g| vec![vec![1.0 / r as f64; r]; g.n()])
            .collect();
    }
    let index: BTreeMap<&str, usize> =
        roster.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let v = roster.len();

    let (observed, edges) = coll.dyad_counts();
    let density = if observed == 0 { 0.5 } else { edges as f64 / observed as f64 };

    let mut sum = vec![0.0; v * v];
    let mut count = vec![0usize; v * v];
    for g in &coll.graphs {
        let ids: Vec<usize> = g.vessels.iter().map(|x| index[x.as_str()]).collect();
        for (i, j, e) in g.observed_dyads() {
            let (a, b) = (ids[i], ids[j]);
            sum[a * v + b] += f64::from(e);
            sum[b * v + a] += f64::from(e);
            count[a * v + b] += 1;
            count[b * v + a] += 1;
        }
    }
    let mean = DMatrix::from_fn(v, v, |i, j| {
        if count[i * v + j] > 0 {
            sum[i * v + j] / count[i * v + j] as f64
        } else {
            density
        }
    });

    let eig = mean.symmetric_eigen();
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let dims = r.min(v);
    let points: Vec<Vec<f64>> = (0..v)
        .map(|i| order[..dims].iter().map(|&k| eig.eigenvectors[(i, k)]).collect())
        .collect();

    let mut rng = substream(seed, &format!("sbm.spectral.r{r}"));
    let labels = kmeans(&points, r, &mut rng);

    coll.graphs
        .iter()
        .map(|g| {
            g.vessels
                .iter()
                .map(|vessel| {
                    let cluster = labels[index[vessel.as_str()]];
                    let mut row = vec![0.1 / r as f64; r];
                    row[cluster] += 0.9;
                    let z: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= z);
                    row
                })
                .collect()
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain k-means with k-means++ seeding; deterministic given the rng.
fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if t < *w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        };
        centers.push(points[next].clone());
    }

    let dims = points[0].len();
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k).min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b]))).expect("k >= 1");
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for d in 0..dims {
                sums[l][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .expect("nonempty");
                centers[c] = points[far].clone();
                changed = true;
            } else {
                for d in 0..dims {
                    centers[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}
