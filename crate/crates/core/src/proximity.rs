//! Per-period proximity graphs from same-day latent overlaps.
//!
//! For a period `S` and vessels b, b' with common fishing days `C` in `S`,
//! the dyad is 1 when the fraction of common days with `BC >= s` reaches the
//! quota `q`, 0 otherwise, and NA when the pair shares no fishing day.
//! The diagonal is NA and only vessels observed in the period appear.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::{EmbeddingStore, LatentError};

#[derive(Debug, Error)]
pub enum ProximityError {
    #[error("threshold s and quota q must lie in (0, 1]; got s={s}, q={q}")]
    BadParams { s: f64, q: f64 },
    #[error("period day set is empty")]
    EmptyPeriod,
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error("line {line}: {detail}")]
    MalformedRow { line: u64, detail: String },
    #[error("missing column `{name}` in {path}")]
    MissingColumn { name: String, path: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// A labelled set of calendar days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub label: String,
    pub days: BTreeSet<NaiveDate>,
}

/// Calendar quarters covering the observed date range, labelled `YYYY-Qn`.
pub fn partition_quarters(dates: &[NaiveDate]) -> Vec<PeriodSpec> {
    let Some(first) = dates.iter().min() else {
        return Vec::new();
    };
    let last = dates.iter().max().expect("nonempty");
    let quarter_of = |d: &NaiveDate| (d.year(), (d.month0() / 3) as i32);
    let mut periods = Vec::new();
    let (mut year, mut quarter) = quarter_of(first);
    let end = quarter_of(last);
    loop {
        let start_month = quarter as u32 * 3 + 1;
        let start = NaiveDate::from_ymd_opt(year, start_month, 1).expect("valid quarter start");
        let next = if quarter == 3 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, start_month + 3, 1)
        }
        .expect("valid quarter end");
        let days: BTreeSet<NaiveDate> = start.iter_days().take_while(|d| *d < next).collect();
        periods.push(PeriodSpec { label: format!("{year}-Q{}", quarter + 1), days });
        if (year, quarter) == end {
            break;
        }
        quarter += 1;
        if quarter == 4 {
            quarter = 0;
            year += 1;
        }
    }
    periods
}

/// Ternary adjacency over the period's vessels: `Some(true)` edge,
/// `Some(false)` non-edge, `None` NA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityGraph {
    pub period: String,
    pub vessels: Vec<String>,
    adj: Vec<Option<bool>>,
}

impl ProximityGraph {
    /// An all-NA graph over the given vessels.
    pub fn empty(period: &str, vessels: Vec<String>) -> Self {
        let n = vessels.len();
        Self { period: period.to_string(), vessels, adj: vec![None; n * n] }
    }

    pub fn n(&self) -> usize {
        self.vessels.len()
    }

    pub fn dyad(&self, i: usize, j: usize) -> Option<bool> {
        self.adj[i * self.vessels.len() + j]
    }

    /// Set an off-diagonal dyad (symmetrically). The diagonal stays NA.
    pub fn set(&mut self, i: usize, j: usize, v: Option<bool>) {
        assert_ne!(i, j, "diagonal dyads are NA by construction");
        let n = self.vessels.len();
        self.adj[i * n + j] = v;
        self.adj[j * n + i] = v;
    }

    /// Observed (non-NA) unordered dyads as `(i, j, edge)` with `i < j`.
    pub fn observed_dyads(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| {
            (i + 1..n).filter_map(move |j| self.dyad(i, j).map(|e| (i, j, e)))
        })
    }

    pub fn edge_density(&self) -> f64 {
        let mut edges = 0usize;
        let mut observed = 0usize;
        for (_, _, e) in self.observed_dyads() {
            observed += 1;
            edges += usize::from(e);
        }
        if observed == 0 {
            0.0
        } else {
            edges as f64 / observed as f64
        }
    }
}

/// An ordered collection of proximity graphs sharing vessel identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphCollection {
    pub graphs: Vec<ProximityGraph>,
}

impl GraphCollection {
    pub fn new(graphs: Vec<ProximityGraph>) -> Self {
        Self { graphs }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Sorted union of vessel ids across all graphs.
    pub fn roster(&self) -> Vec<String> {
        let set: BTreeSet<String> =
            self.graphs.iter().flat_map(|g| g.vessels.iter().cloned()).collect();
        set.into_iter().collect()
    }

    /// Total observed dyads and the number carrying an edge.
    pub fn dyad_counts(&self) -> (usize, usize) {
        let mut observed = 0;
        let mut edges = 0;
        for g in &self.graphs {
            for (_, _, e) in g.observed_dyads() {
                observed += 1;
                edges += usize::from(e);
            }
        }
        (observed, edges)
    }
}

/// Build the proximity graph of one period from same-day overlaps.
pub fn build_graph(
    store: &EmbeddingStore,
    period: &PeriodSpec,
    s: f64,
    q: f64,
) -> Result<ProximityGraph, ProximityError> {
    if !(s > 0.0 && s <= 1.0 && q > 0.0 && q <= 1.0) {
        return Err(ProximityError::BadParams { s, q });
    }
    if period.days.is_empty() {
        return Err(ProximityError::EmptyPeriod);
    }
    let vessels: Vec<String> = store
        .vessels()
        .into_iter()
        .filter(|v| store.dates_of(v).iter().any(|d| period.days.contains(d)))
        .collect();
    let n = vessels.len();
    let mut graph = ProximityGraph {
        period: period.label.clone(),
        vessels: vessels.clone(),
        adj: vec![None; n * n],
    };
    let observed: Vec<Vec<NaiveDate>> = vessels
        .iter()
        .map(|v| store.dates_of(v).into_iter().filter(|d| period.days.contains(d)).collect())
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let common: Vec<NaiveDate> =
                observed[i].iter().filter(|d| observed[j].binary_search(d).is_ok()).copied().collect();
            if common.is_empty() {
                continue; // stays NA
            }
            let mut hits = 0usize;
            for day in &common {
                if store.bc(&vessels[i], *day, &vessels[j], *day)? >= s {
                    hits += 1;
                }
            }
            let edge = hits as f64 / common.len() as f64 >= q;
            graph.set(i, j, Some(edge));
        }
    }
    Ok(graph)
}

fn edge_token(d: Option<bool>) -> &'static str {
    match d {
        Some(true) => "1",
        Some(false) => "0",
        None => "NA",
    }
}

/// Long-form CSV `period,vessel_a,vessel_b,edge` over all pairs `a <= b`
/// (the NA diagonal keeps single-vessel periods representable).
pub fn export_collection(coll: &GraphCollection, path: &Path) -> Result<(), ProximityError> {
    let csv_err = |e| ProximityError::Csv { path: path.display().to_string(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["period", "vessel_a", "vessel_b", "edge"]).map_err(csv_err)?;
    for g in &coll.graphs {
        for i in 0..g.n() {
            for j in i..g.n() {
                w.write_record([&g.period, &g.vessels[i], &g.vessels[j], edge_token(g.dyad(i, j))])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| ProximityError::Io { path: path.display().to_string(), source: e })?;
    Ok(())
}

pub fn import_collection(path: &Path) -> Result<GraphCollection, ProximityError> {
    let csv_err = |e| ProximityError::Csv { path: path.display().to_string(), source: e };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    {
        let headers = reader.headers().map_err(csv_err)?;
        for name in ["period", "vessel_a", "vessel_b", "edge"] {
            if !headers.iter().any(|h| h == name) {
                return Err(ProximityError::MissingColumn {
                    name: name.into(),
                    path: path.display().to_string(),
                });
            }
        }
    }
    // rows grouped per period in file order
    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::BTreeMap<String, Vec<(String, String, Option<bool>)>> =
        Default::default();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| {
            rec.get(i).map(str::to_string).ok_or(ProximityError::MalformedRow {
                line,
                detail: format!("missing field {i}"),
            })
        };
        let period = get(0)?;
        let a = get(1)?;
        let b = get(2)?;
        let edge = match rec.get(3) {
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some("NA") => None,
            other => {
                return Err(ProximityError::MalformedRow {
                    line,
                    detail: format!("edge must be 0, 1 or NA, got {other:?}"),
                })
            }
        };
        if !rows.contains_key(&period) {
            order.push(period.clone());
        }
        rows.entry(period).or_default().push((a, b, edge));
    }
    let mut graphs = Vec::with_capacity(order.len());
    for period in order {
        let entries = rows.remove(&period).expect("period recorded");
        let vessels: Vec<String> = {
            let set: BTreeSet<String> =
                entries.iter().flat_map(|(a, b, _)| [a.clone(), b.clone()]).collect();
            set.into_iter().collect()
        };
        let n = vessels.len();
        let index = |v: &str| vessels.binary_search_by(|x| x.as_str().cmp(v)).expect("in roster");
        let mut g = ProximityGraph { period, vessels: vessels.clone(), adj: vec![None; n * n] };
        for (a, b, edge) in entries {
            let (i, j) = (index(&a), index(&b));
            if i != j {
                g.set(i, j, edge);
            }
        }
        graphs.push(g);
    }
    Ok(GraphCollection::new(graphs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::LatentGaussian;
    use rand::Rng;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn five_years_give_twenty_quarters() {
        let dates = [date(2014, 1, 1), date(2018, 12, 31)];
        let periods = partition_quarters(&dates);
        assert_eq!(periods.len(), 20);
        assert_eq!(periods[0].label, "2014-Q1");
        assert_eq!(periods[19].label, "2018-Q4");
    }

    #[test]
    fn single_day_gives_one_quarter() {
        let periods = partition_quarters(&[date(2015, 5, 7)]);
        assert_eq!(periods.len(), 1);
        assert_eq!(periods[0].label, "2015-Q2");
    }

    #[test]
    fn quarter_boundary_assignment() {
        let periods = partition_quarters(&[date(2015, 3, 31), date(2015, 4, 1)]);
        assert_eq!(periods.len(), 2);
        assert!(periods[0].days.contains(&date(2015, 3, 31)));
        assert!(!periods[0].days.contains(&date(2015, 4, 1)));
        assert!(periods[1].days.contains(&date(2015, 4, 1)));
    }

    fn store_with(entries: &[(&str, NaiveDate, f64, f64)]) -> EmbeddingStore {
        let mut store = EmbeddingStore::new();
        for (v, d, mu, var) in entries {
            store
                .insert(v, *d, LatentGaussian::new(vec![*mu], vec![*var]).unwrap())
                .unwrap();
        }
        store
    }

    fn period(label: &str, days: &[NaiveDate]) -> PeriodSpec {
        PeriodSpec { label: label.into(), days: days.iter().copied().collect() }
    }

    #[test]
    fn identical_embeddings_always_connect() {
        let d1 = date(2015, 1, 1);
        let d2 = date(2015, 1, 2);
        let store = store_with(&[
            ("a", d1, 0.0, 1.0),
            ("a", d2, 0.0, 1.0),
            ("b", d1, 0.0, 1.0),
            ("b", d2, 0.0, 1.0),
        ]);
        let g = build_graph(&store, &period("p", &[d1, d2]), 1.0, 1.0).unwrap();
        assert_eq!(g.dyad(0, 1), Some(true));
        assert_eq!(g.dyad(0, 0), None);
        assert_eq!(g.dyad(1, 1), None);
    }

    #[test]
    fn no_common_days_is_na_and_absent_vessels_are_omitted() {
        let d1 = date(2015, 1, 1);
        let d2 = date(2015, 1, 2);
        let d_out = date(2015, 7, 1);
        let store = store_with(&[
            ("a", d1, 0.0, 1.0),
            ("b", d2, 0.0, 1.0),
            ("c", d_out, 0.0, 1.0),
        ]);
        let g = build_graph(&store, &period("p", &[d1, d2]), 0.8, 0.5).unwrap();
        assert_eq!(g.vessels, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(g.dyad(0, 1), None);
    }

    /// Direct evaluation of the dyad rule for the oracle.
    fn brute_force_dyad(
        store: &EmbeddingStore,
        days: &[NaiveDate],
        a: &str,
        b: &str,
        s: f64,
        q: f64,
    ) -> Option<bool> {
        let common: Vec<NaiveDate> = days
            .iter()
            .filter(|d| store.get(a, **d).is_some() && store.get(b, **d).is_some())
            .copied()
            .collect();
        if common.is_empty() {
            return None;
        }
        let hits =
            common.iter().filter(|d| store.bc(a, **d, b, **d).unwrap() >= s).count();
        Some(hits as f64 / common.len() as f64 >= q)
    }

    fn random_store(seed: u64, n_vessels: usize, days: &[NaiveDate], p_present: f64) -> EmbeddingStore {
        let mut rng = crate::rng::substream(seed, "prox.store");
        let mut store = EmbeddingStore::new();
        for v in 0..n_vessels {
            for d in days {
                if rng.gen::<f64>() < p_present {
                    let q = LatentGaussian::new(
                        vec![rng.gen_range(-1.5..1.5)],
                        vec![rng.gen_range(0.05..1.5)],
                    )
                    .unwrap();
                    store.insert(&format!("v{v}"), *d, q).unwrap();
                }
            }
        }
        store
    }

    #[test]
    fn random_instances_match_brute_force() {
        let days: Vec<NaiveDate> = (0..10).map(|i| date(2015, 1, 1 + i)).collect();
        for seed in 0..5 {
            let store = random_store(seed, 6, &days, 0.7);
            let p = period("p", &days);
            for (s, q) in [(0.5, 0.5), (0.8, 0.3), (0.9, 1.0)] {
                let g = build_graph(&store, &p, s, q).unwrap();
                for i in 0..g.n() {
                    for j in i + 1..g.n() {
                        let want = brute_force_dyad(&store, &days, &g.vessels[i], &g.vessels[j], s, q);
                        assert_eq!(g.dyad(i, j), want, "seed={seed} s={s} q={q} ({i},{j})");
                        assert_eq!(g.dyad(j, i), want, "symmetry");
                    }
                }
            }
        }
    }

    #[test]
    fn minimal_quota_connects_iff_any_day_overlaps() {
        let days: Vec<NaiveDate> = (0..8).map(|i| date(2015, 2, 1 + i)).collect();
        let store = random_store(77, 5, &days, 0.8);
        let p = period("p", &days);
        let s = 0.7;
        let g = build_graph(&store, &p, s, 1e-9).unwrap();
        for i in 0..g.n() {
            for j in i + 1..g.n() {
                let common: Vec<NaiveDate> = days
                    .iter()
                    .filter(|d| {
                        store.get(&g.vessels[i], **d).is_some() && store.get(&g.vessels[j], **d).is_some()
                    })
                    .copied()
                    .collect();
                let any = common
                    .iter()
                    .any(|d| store.bc(&g.vessels[i], *d, &g.vessels[j], *d).unwrap() >= s);
                match g.dyad(i, j) {
                    None => assert!(common.is_empty()),
                    Some(edge) => assert_eq!(edge, any),
                }
            }
        }
    }

    #[test]
    fn density_is_monotone_in_s_and_q() {
        let days: Vec<NaiveDate> = (0..12).map(|i| date(2015, 3, 1 + i)).collect();
        let store = random_store(5, 8, &days, 0.9);
        let p = period("p", &days);
        let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
        for &q in &grid {
            let mut prev = f64::INFINITY;
            for &s in &grid {
                let d = build_graph(&store, &p, s, q).unwrap().edge_density();
                assert!(d <= prev + 1e-15, "density not monotone in s");
                prev = d;
            }
        }
        for &s in &grid {
            let mut prev = f64::INFINITY;
            for &q in &grid {
                let d = build_graph(&store, &p, s, q).unwrap().edge_density();
                assert!(d <= prev + 1e-15, "density not monotone in q");
                prev = d;
            }
        }
    }

    #[test]
    fn collection_roundtrip_with_na_tokens() {
        let days: Vec<NaiveDate> = (0..20).map(|i| date(2015, 1, 1) + chrono::Duration::days(i * 30)).collect();
        let store = random_store(9, 6, &days, 0.6);
        let periods = partition_quarters(&days);
        let graphs: Vec<ProximityGraph> = periods
            .iter()
            .filter_map(|p| {
                let g = build_graph(&store, p, 0.8, 0.5).unwrap();
                (g.n() > 0).then_some(g)
            })
            .collect();
        let coll = GraphCollection::new(graphs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graphs.csv");
        export_collection(&coll, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(",NA"));
        let back = import_collection(&path).unwrap();
        assert_eq!(back, coll);
        let labels: BTreeSet<&str> = back.graphs.iter().map(|g| g.period.as_str()).collect();
        assert_eq!(labels.len(), back.graphs.len());
    }

    #[test]
    fn malformed_edge_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "period,vessel_a,vessel_b,edge\np,a,b,2\n").unwrap();
        match import_collection(&path) {
            Err(ProximityError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
