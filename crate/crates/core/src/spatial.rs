//! Locations and sparse neighborhood structure.
//!
//! A city is a set of `n` discrete locations. Four boolean masks relate them:
//!
//! | mask        | entry `(i, j)` means                                       |
//! |-------------|------------------------------------------------------------|
//! | dispatch    | a driver at `j` can be dispatched to a request at `i`      |
//! | alloc       | a driver at `i` may be sent a PPZ with destination `j`     |
//! | contrib     | escrow account `i` may fund PPZs with destination `j`      |
//! | adjacency   | `i` and `j` are spatial neighbors (price smoothing)        |
//!
//! Masks are stored in compressed sparse row form. Real cities have tens of
//! thousands of locations and neighborhoods of a few dozen, so nothing in this
//! module ever materialises a dense `n × n` matrix.

use std::collections::BTreeSet;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_len, Error, Result};

/// A sparse boolean matrix in CSR form with sorted, de-duplicated columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseMask {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl SparseMask {
    /// Builds a mask from `(row, col)` pairs. Duplicates are merged.
    pub fn from_pairs<I>(n_rows: usize, n_cols: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        for &(i, j) in &pairs {
            if i >= n_rows {
                return Err(Error::LocationOutOfRange { index: i, n: n_rows });
            }
            if j >= n_cols {
                return Err(Error::LocationOutOfRange { index: j, n: n_cols });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0; n_rows + 1];
        for &(i, _) in &pairs {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = pairs.into_iter().map(|(_, j)| j).collect();
        Ok(SparseMask {
            n_rows,
            n_cols,
            row_ptr,
            cols,
        })
    }

    pub fn empty(n: usize) -> Self {
        SparseMask {
            n_rows: n,
            n_cols: n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMask {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Column indices of the true entries in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n_rows && self.row(i).binary_search(&j).is_ok()
    }

    /// Position of `(i, j)` in row-major enumeration of the true entries.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n_rows {
            return None;
        }
        self.row(i)
            .binary_search(&j)
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    /// All true entries in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j)))
    }

    pub fn transpose(&self) -> SparseMask {
        let pairs = self.pairs().map(|(i, j)| (j, i));
        SparseMask::from_pairs(self.n_cols, self.n_rows, pairs)
            .expect("transposed indices are in range")
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.pairs().all(|(i, j)| self.contains(j, i))
    }

    /// The mask with every diagonal entry set.
    pub fn with_diagonal(&self) -> SparseMask {
        let n = self.n_rows.min(self.n_cols);
        SparseMask::from_pairs(
            self.n_rows,
            self.n_cols,
            self.pairs().chain((0..n).map(|i| (i, i))),
        )
        .expect("indices are in range")
    }

    /// The mask with the diagonal cleared.
    pub fn without_diagonal(&self) -> SparseMask {
        SparseMask::from_pairs(
            self.n_rows,
            self.n_cols,
            self.pairs().filter(|&(i, j)| i != j),
        )
        .expect("indices are in range")
    }

    /// `M · v` treating true entries as ones.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("mask operand", self.n_cols, v.len())?;
        Ok((0..self.n_rows)
            .map(|i| self.row(i).iter().map(|&j| v[j]).sum())
            .collect())
    }
}

impl Serialize for SparseMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.nnz()))?;
        for (i, j) in self.pairs() {
            seq.serialize_element(&[i, j])?;
        }
        seq.end()
    }
}

/// The discrete city: locations plus neighborhood masks.
///
/// Construction normalises the masks: dispatch and contribution masks get
/// their diagonals set (a location dispatches to and funds itself) and the
/// adjacency relation is symmetrised without self-loops. An asymmetric
/// dispatch mask or an allocation pair from a location to itself is rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec")]
pub struct CityGraph {
    n: usize,
    dispatch: SparseMask,
    alloc: SparseMask,
    contrib: SparseMask,
    adjacency: SparseMask,
}

/// Wire form of a city: pair lists for each mask.
#[derive(Deserialize)]
struct GraphSpec {
    n: usize,
    dispatch: Vec<(usize, usize)>,
    #[serde(default)]
    alloc: Vec<(usize, usize)>,
    #[serde(default)]
    contrib: Vec<(usize, usize)>,
    #[serde(default)]
    adjacency: Vec<(usize, usize)>,
}

impl TryFrom<GraphSpec> for CityGraph {
    type Error = Error;

    fn try_from(g: GraphSpec) -> Result<Self> {
        CityGraph::from_pairs(g.n, &g.dispatch, &g.alloc, &g.contrib, &g.adjacency)
    }
}

impl CityGraph {
    pub fn new(
        n: usize,
        dispatch: SparseMask,
        alloc: SparseMask,
        contrib: SparseMask,
        adjacency: SparseMask,
    ) -> Result<Self> {
        for (name, mask) in [
            ("dispatch mask", &dispatch),
            ("allocation mask", &alloc),
            ("contribution mask", &contrib),
            ("adjacency", &adjacency),
        ] {
            check_len(name, n, mask.n_rows())?;
            check_len(name, n, mask.n_cols())?;
        }
        let dispatch = dispatch.with_diagonal();
        if !dispatch.is_symmetric() {
            return Err(Error::invalid("dispatch mask must be symmetric"));
        }
        if let Some(i) = (0..n).find(|&i| alloc.contains(i, i)) {
            return Err(Error::invalid(format!(
                "allocation mask has a self pair at location {i}"
            )));
        }
        let contrib = contrib.with_diagonal();
        let adjacency = SparseMask::from_pairs(
            n,
            n,
            adjacency
                .pairs()
                .filter(|&(i, j)| i != j)
                .flat_map(|(i, j)| [(i, j), (j, i)]),
        )?;
        Ok(CityGraph {
            n,
            dispatch,
            alloc,
            contrib,
            adjacency,
        })
    }

    /// Convenience constructor from raw pair lists.
    pub fn from_pairs(
        n: usize,
        dispatch: &[(usize, usize)],
        alloc: &[(usize, usize)],
        contrib: &[(usize, usize)],
        adjacency: &[(usize, usize)],
    ) -> Result<Self> {
        CityGraph::new(
            n,
            SparseMask::from_pairs(n, n, dispatch.iter().copied())?,
            SparseMask::from_pairs(n, n, alloc.iter().copied())?,
            SparseMask::from_pairs(n, n, contrib.iter().copied())?,
            SparseMask::from_pairs(n, n, adjacency.iter().copied())?,
        )
    }

    /// A city where every location is its own dispatch neighborhood and
    /// nothing may be reallocated.
    pub fn isolated(n: usize) -> Self {
        CityGraph {
            n,
            dispatch: SparseMask::identity(n),
            alloc: SparseMask::empty(n),
            contrib: SparseMask::identity(n),
            adjacency: SparseMask::empty(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dispatch(&self) -> &SparseMask {
        &self.dispatch
    }

    pub fn alloc(&self) -> &SparseMask {
        &self.alloc
    }

    pub fn contrib(&self) -> &SparseMask {
        &self.contrib
    }

    pub fn adjacency(&self) -> &SparseMask {
        &self.adjacency
    }

    /// Number of destinations escrow account `i` may fund.
    pub fn fanout(&self, i: usize) -> usize {
        self.contrib.row(i).len()
    }

    /// Each undirected adjacency edge once, as `(i, k)` with `i < k`.
    pub fn adjacency_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.pairs().filter(|&(i, k)| i < k)
    }
}

/// Locations that survive pruning, with the compact re-indexing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActiveSet {
    kept: Vec<usize>,
    #[serde(skip)]
    origin_map: Vec<Option<usize>>,
}

impl ActiveSet {
    /// Every location of an `n`-location city.
    pub fn all(n: usize) -> Self {
        ActiveSet {
            kept: (0..n).collect(),
            origin_map: (0..n).map(Some).collect(),
        }
    }

    /// An explicit set of locations; order and duplicates are normalised.
    pub fn from_locations(n: usize, locations: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = locations.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&i| i >= n) {
            return Err(Error::LocationOutOfRange { index: bad, n });
        }
        let kept: Vec<usize> = set.into_iter().collect();
        let mut origin_map = vec![None; n];
        for (c, &i) in kept.iter().enumerate() {
            origin_map[i] = Some(c);
        }
        Ok(ActiveSet { kept, origin_map })
    }

    /// Original ids of kept locations, strictly increasing.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Number of locations in the underlying city.
    pub fn city_size(&self) -> usize {
        self.origin_map.len()
    }

    /// Compact index of original location `i`, if kept.
    pub fn compact(&self, i: usize) -> Option<usize> {
        self.origin_map.get(i).copied().flatten()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.compact(i).is_some()
    }

    /// Original id of compact index `c`.
    pub fn original(&self, c: usize) -> usize {
        self.kept[c]
    }
}

/// Valid allocation pairs among active locations, in original ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AllocationIndex {
    pairs: Vec<(usize, usize)>,
}

impl AllocationIndex {
    /// An index with no allocation variables (the null benchmark).
    pub fn none() -> Self {
        AllocationIndex::default()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct destinations, ascending.
    pub fn destinations(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.pairs.iter().map(|&(_, j)| j).collect();
        set.into_iter().collect()
    }
}

/// Sums `v` over each location's dispatch neighborhood.
pub fn neighborhood_aggregate(graph: &CityGraph, v: &[f64]) -> Result<Vec<f64>> {
    graph.dispatch.matvec(v)
}

/// Locations whose dispatch neighborhood holds positive demand.
pub fn demand_rows(graph: &CityGraph, d: &[f64]) -> Result<Vec<bool>> {
    check_len("demand", graph.n, d.len())?;
    let mut rows = vec![false; graph.n];
    for k in (0..graph.n).filter(|&k| d[k] > 0.0) {
        // dispatch is symmetric: k ∈ N(i) iff i ∈ N(k)
        for &i in graph.dispatch.row(k) {
            rows[i] = true;
        }
    }
    Ok(rows)
}

/// Restricts the city to the locations a positioning solve can affect.
///
/// Two kinds of location are kept:
///
/// 1. every location whose dispatch neighborhood contains demand, together
///    with that whole neighborhood;
/// 2. every location with assignable supply whose allocation neighborhood
///    reaches a location of kind 1, together with that allocation
///    neighborhood.
///
/// Kind 1 is closed over neighborhoods of *demand-touched* rows rather than
/// demand locations only, so every market-balance row that carries demand sees
/// all of its supply terms. With landing distributions supported on a pair's
/// origin and destination, and a PPZ recipient no more likely to linger at the
/// origin than an unallocated driver, the optimal positioning objective is
/// unchanged by the restriction.
pub fn prune_active_set(graph: &CityGraph, d: &[f64], s0_assignable: &[f64]) -> Result<ActiveSet> {
    check_len("assignable supply", graph.n, s0_assignable.len())?;
    let rows = demand_rows(graph, d)?;
    let mut touched = vec![false; graph.n];
    for i in (0..graph.n).filter(|&i| rows[i]) {
        for &k in graph.dispatch.row(i) {
            touched[k] = true;
        }
    }
    let mut keep = touched.clone();
    for o in (0..graph.n).filter(|&o| s0_assignable[o] > 0.0) {
        let reach = graph.alloc.row(o);
        if reach.iter().any(|&j| touched[j]) {
            keep[o] = true;
            for &j in reach {
                keep[j] = true;
            }
        }
    }
    ActiveSet::from_locations(graph.n, (0..graph.n).filter(|&i| keep[i]))
}

/// Enumerates the allocation variables: valid pairs with both ends active.
pub fn vectorize_allocation(graph: &CityGraph, active: &ActiveSet) -> AllocationIndex {
    let pairs = active
        .kept()
        .iter()
        .flat_map(|&i| {
            graph
                .alloc
                .row(i)
                .iter()
                .filter(|&&j| active.contains(j))
                .map(move |&j| (i, j))
        })
        .collect();
    AllocationIndex { pairs }
}

/// Enumerates contribution variables `(account, destination)` for the given
/// destinations, keeping only accounts accepted by `funded`.
pub fn vectorize_contribution(
    graph: &CityGraph,
    destinations: &[usize],
    funded: impl Fn(usize) -> bool,
) -> Vec<(usize, usize)> {
    let contrib_t = graph.contrib.transpose();
    let mut pairs: Vec<(usize, usize)> = destinations
        .iter()
        .flat_map(|&j| {
            contrib_t
                .row(j)
                .iter()
                .filter(|&&i| funded(i))
                .map(move |&i| (i, j))
                .collect::<Vec<_>>()
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain3() -> CityGraph {
        CityGraph::from_pairs(
            3,
            &[(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2)],
            &[],
            &[],
            &[],
        )
        .unwrap()
    }

    fn dense_matvec(n: usize, pairs: &[(usize, usize)], v: &[f64]) -> Vec<f64> {
        let mut m = vec![vec![0.0; n]; n];
        for &(i, j) in pairs {
            m[i][j] = 1.0;
        }
        m.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn aggregate_identity_and_full() {
        let g = CityGraph::isolated(3);
        assert_eq!(
            neighborhood_aggregate(&g, &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let all: Vec<_> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let g = CityGraph::from_pairs(3, &all, &[], &[], &[]).unwrap();
        assert_eq!(
            neighborhood_aggregate(&g, &[1.0, 2.0, 3.0]).unwrap(),
            vec![6.0, 6.0, 6.0]
        );
    }

    #[test]
    fn aggregate_chain_matches_dense_oracle() {
        let g = chain3();
        let v = [1.0, 2.0, 3.0];
        let pairs: Vec<_> = g.dispatch().pairs().collect();
        let oracle = dense_matvec(3, &pairs, &v);
        assert_eq!(oracle, vec![3.0, 6.0, 5.0]);
        assert_eq!(neighborhood_aggregate(&g, &v).unwrap(), oracle);
    }

    #[test]
    fn aggregate_rejects_wrong_length() {
        let g = chain3();
        assert!(matches!(
            neighborhood_aggregate(&g, &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn graph_normalises_and_validates_masks() {
        let g = CityGraph::from_pairs(2, &[], &[(0, 1)], &[], &[(0, 1)]).unwrap();
        assert!(g.dispatch().contains(0, 0) && g.dispatch().contains(1, 1));
        assert!(g.contrib().contains(1, 1));
        assert!(g.adjacency().contains(1, 0));
        assert!(CityGraph::from_pairs(2, &[(0, 1)], &[], &[], &[]).is_err());
        assert!(CityGraph::from_pairs(2, &[], &[(1, 1)], &[], &[]).is_err());
        assert!(CityGraph::from_pairs(2, &[(0, 2)], &[], &[], &[]).is_err());
    }

    #[test]
    fn prune_no_demand_is_empty() {
        let g = chain3();
        let a = prune_active_set(&g, &[0.0; 3], &[5.0; 3]).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn prune_pulls_in_supply_that_can_reach_demand() {
        let g = CityGraph::from_pairs(2, &[], &[(1, 0)], &[], &[]).unwrap();
        let a = prune_active_set(&g, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(a.kept(), &[0, 1]);
        assert_eq!(a.compact(1), Some(1));
    }

    #[test]
    fn prune_drops_isolated_location() {
        let g = CityGraph::from_pairs(3, &[(0, 1), (1, 0)], &[(1, 0), (0, 1)], &[], &[]).unwrap();
        let a = prune_active_set(&g, &[2.0, 0.0, 0.0], &[1.0, 1.0, 4.0]).unwrap();
        assert_eq!(a.kept(), &[0, 1]);
        assert_eq!(a.compact(2), None);
    }

    #[test]
    fn prune_ignores_supply_without_reach() {
        // supply at 2 can only move to 3, which is nowhere near demand
        let g = CityGraph::from_pairs(4, &[(0, 1), (1, 0)], &[(2, 3)], &[], &[]).unwrap();
        let a = prune_active_set(&g, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(a.kept(), &[0, 1]);
    }

    #[test]
    fn vectorize_cases() {
        let g = CityGraph::from_pairs(2, &[], &[], &[], &[]).unwrap();
        assert!(vectorize_allocation(&g, &ActiveSet::all(2)).is_empty());

        let g = CityGraph::from_pairs(2, &[], &[(1, 0), (0, 1)], &[], &[]).unwrap();
        assert_eq!(
            vectorize_allocation(&g, &ActiveSet::all(2)).pairs(),
            &[(0, 1), (1, 0)]
        );

        let g = CityGraph::from_pairs(3, &[], &[(0, 1), (0, 2), (2, 1)], &[], &[]).unwrap();
        let active = ActiveSet::from_locations(3, [0, 1]).unwrap();
        // filter-then-sort oracle
        let mut oracle: Vec<_> = g
            .alloc()
            .pairs()
            .filter(|&(i, j)| active.contains(i) && active.contains(j))
            .collect();
        oracle.sort();
        assert_eq!(oracle, vec![(0, 1)]);
        assert_eq!(vectorize_allocation(&g, &active).pairs(), oracle.as_slice());
    }

    #[test]
    fn contribution_pairs_follow_mask() {
        let g = CityGraph::from_pairs(3, &[], &[], &[(0, 1), (2, 1)], &[]).unwrap();
        let pairs = vectorize_contribution(&g, &[1], |i| i != 2);
        assert_eq!(pairs, vec![(0, 1), (1, 1)]);
    }

    fn arb_graph() -> impl Strategy<Value = (CityGraph, Vec<f64>, Vec<f64>)> {
        (1usize..9).prop_flat_map(|n| {
            let pair = (0..n, 0..n);
            (
                Just(n),
                prop::collection::vec(pair.clone(), 0..3 * n),
                prop::collection::vec(pair, 0..3 * n),
                prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64], n),
                prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64], n),
            )
                .prop_map(|(n, disp, alloc, d, s)| {
                    let disp: Vec<_> = disp.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
                    let alloc: Vec<_> = alloc.into_iter().filter(|(i, j)| i != j).collect();
                    let g = CityGraph::from_pairs(n, &disp, &alloc, &[], &[]).unwrap();
                    (g, d, s)
                })
        })
    }

    proptest! {
        #[test]
        fn aggregate_is_linear(
            (g, u, v) in arb_graph(),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
        ) {
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = neighborhood_aggregate(&g, &mix).unwrap();
            let au = neighborhood_aggregate(&g, &u).unwrap();
            let av = neighborhood_aggregate(&g, &v).unwrap();
            for i in 0..g.n() {
                prop_assert!((lhs[i] - (a * au[i] + b * av[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn vectorized_length_matches_mask((g, d, s) in arb_graph()) {
            let active = prune_active_set(&g, &d, &s).unwrap();
            let idx = vectorize_allocation(&g, &active);
            let expected = g.alloc().pairs()
                .filter(|&(i, j)| active.contains(i) && active.contains(j))
                .count();
            prop_assert_eq!(idx.len(), expected);
            prop_assert!(idx.pairs().windows(2).all(|w| w[0] < w[1]));
            for (c, &i) in active.kept().iter().enumerate() {
                prop_assert_eq!(active.compact(i), Some(c));
            }
        }

        #[test]
        fn demand_rows_and_their_neighborhoods_are_kept((g, d, s) in arb_graph()) {
            let active = prune_active_set(&g, &d, &s).unwrap();
            let rows = demand_rows(&g, &d).unwrap();
            for i in (0..g.n()).filter(|&i| rows[i]) {
                for &k in g.dispatch().row(i) {
                    prop_assert!(active.contains(k));
                }
            }
        }
    }

    #[test]
    fn graph_json_round_trips() {
        let g = CityGraph::from_pairs(3, &[(0, 1), (1, 0)], &[(0, 2)], &[(2, 0)], &[(0, 1)]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<CityGraph>(&json).unwrap(), g);
        let bad = r#"{"n":2,"dispatch":[[0,1]]}"#;
        assert!(serde_json::from_str::<CityGraph>(bad).is_err());
    }
}
