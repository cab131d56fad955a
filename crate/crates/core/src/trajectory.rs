//! Piecewise-constant categorical trajectories and their 0-1 indicator encoding.
//!
//! A trajectory on `[0, T]` is stored as strictly increasing breakpoints
//! `0 = t_0 < t_1 < ... < t_m = T` and one value per interval `[t_k, t_{k+1})`.
//! Segments are right-continuous and the value at `T` is the value of the last
//! segment.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collection protocol of a panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// One dominant state at every instant.
    #[serde(rename = "TDS", alias = "tds")]
    Tds,
    /// Any subset of states, possibly empty.
    #[serde(rename = "TCATA", alias = "tcata")]
    Tcata,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Tds => f.write_str("TDS"),
            Mode::Tcata => f.write_str("TCATA"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tds" => Ok(Mode::Tds),
            "tcata" => Ok(Mode::Tcata),
            other => Err(Error::Validation(format!("unknown mode '{other}'"))),
        }
    }
}

/// Ordered list of distinct state labels. The position of a label is its index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StateSpace {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl StateSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Validation("state space must contain at least one state".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::Validation(format!("state {i} has an empty label")));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate state label '{label}'")));
            }
        }
        Ok(StateSpace { labels, index })
    }

    /// Number of states `q`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

impl TryFrom<Vec<String>> for StateSpace {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        StateSpace::new(labels)
    }
}

impl From<StateSpace> for Vec<String> {
    fn from(space: StateSpace) -> Self {
        space.labels
    }
}

/// A set of state indices, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct StateSet(Vec<usize>);

impl StateSet {
    pub fn empty() -> Self {
        StateSet(Vec::new())
    }

    pub fn singleton(j: usize) -> Self {
        StateSet(vec![j])
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn insert(&mut self, j: usize) {
        if let Err(pos) = self.0.binary_search(&j) {
            self.0.insert(pos, j);
        }
    }

    pub fn remove(&mut self, j: usize) {
        if let Ok(pos) = self.0.binary_search(&j) {
            self.0.remove(pos);
        }
    }
}

impl From<Vec<usize>> for StateSet {
    fn from(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        StateSet(v)
    }
}

impl From<StateSet> for Vec<usize> {
    fn from(s: StateSet) -> Self {
        s.0
    }
}

impl FromIterator<usize> for StateSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        StateSet::from(iter.into_iter().collect::<Vec<_>>())
    }
}

fn check_breakpoints(breakpoints: &[f64], n_segments: usize) -> Result<()> {
    if n_segments == 0 {
        return Err(Error::Validation("trajectory needs at least one segment".into()));
    }
    if breakpoints.len() != n_segments + 1 {
        return Err(Error::Validation(format!(
            "expected {} breakpoints for {} segments, got {}",
            n_segments + 1,
            n_segments,
            breakpoints.len()
        )));
    }
    if breakpoints.iter().any(|t| !t.is_finite()) {
        return Err(Error::Validation("breakpoints must be finite".into()));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::Validation(format!(
            "first breakpoint must be 0, got {}",
            breakpoints[0]
        )));
    }
    for (k, w) in breakpoints.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::Validation(format!(
                "segment {k} has non-positive length ([{}, {}])",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Piecewise-constant map from `[0, T]` to subsets of the state space, in
/// canonical form (no two adjacent segments carry the same subset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory", into = "RawTrajectory")]
pub struct CategoricalTrajectory {
    breakpoints: Vec<f64>,
    segments: Vec<StateSet>,
}

#[derive(Serialize, Deserialize)]
struct RawTrajectory {
    breakpoints: Vec<f64>,
    segments: Vec<StateSet>,
}

impl TryFrom<RawTrajectory> for CategoricalTrajectory {
    type Error = Error;

    fn try_from(raw: RawTrajectory) -> Result<Self> {
        CategoricalTrajectory::new(raw.breakpoints, raw.segments)
    }
}

impl From<CategoricalTrajectory> for RawTrajectory {
    fn from(t: CategoricalTrajectory) -> Self {
        RawTrajectory {
            breakpoints: t.breakpoints,
            segments: t.segments,
        }
    }
}

impl CategoricalTrajectory {
    /// Builds a trajectory, merging adjacent segments that carry equal subsets.
    /// Zero-length segments are rejected.
    pub fn new(breakpoints: Vec<f64>, segments: Vec<StateSet>) -> Result<Self> {
        check_breakpoints(&breakpoints, segments.len())?;
        let mut bps = Vec::with_capacity(breakpoints.len());
        let mut segs: Vec<StateSet> = Vec::with_capacity(segments.len());
        bps.push(breakpoints[0]);
        for (k, seg) in segments.into_iter().enumerate() {
            if segs.last() == Some(&seg) {
                *bps.last_mut().unwrap() = breakpoints[k + 1];
            } else {
                segs.push(seg);
                bps.push(breakpoints[k + 1]);
            }
        }
        Ok(CategoricalTrajectory {
            breakpoints: bps,
            segments: segs,
        })
    }

    /// Trajectory holding one subset over the whole of `[0, horizon]`.
    pub fn constant(horizon: f64, value: StateSet) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value])
    }

    /// Singleton-valued trajectory from `(onset, state)` pairs; the first onset must be 0.
    pub fn from_states(breakpoints: Vec<f64>, states: &[usize]) -> Result<Self> {
        let segs = states.iter().map(|&j| StateSet::singleton(j)).collect();
        Self::new(breakpoints, segs)
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[StateSet] {
        &self.segments
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// `(left, right, subset)` for each segment.
    pub fn iter_segments(&self) -> impl Iterator<Item = (f64, f64, &StateSet)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.segments)
            .map(|(w, s)| (w[0], w[1], s))
    }

    /// Index of the segment containing `t` (right-continuous, `T` maps to the last one).
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
        }
        let k = self.breakpoints.partition_point(|&b| b <= t);
        Ok((k - 1).min(self.segments.len() - 1))
    }

    /// Subset of active states at time `t`.
    pub fn evaluate(&self, t: f64) -> Result<&StateSet> {
        Ok(&self.segments[self.segment_index(t)?])
    }

    /// Rescales time so that the horizon becomes exactly 1.
    pub fn normalize_time(&self) -> Result<Self> {
        let horizon = self.horizon();
        if !(horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if horizon == 1.0 {
            return Ok(self.clone());
        }
        let n = self.breakpoints.len();
        let mut bps: Vec<f64> = self.breakpoints.iter().map(|&b| b / horizon).collect();
        bps[n - 1] = 1.0;
        Self::new(bps, self.segments.clone())
    }

    /// Rounds interior breakpoints to multiples of `tick`. Segments that collapse
    /// to zero length are dropped and equal neighbours merged. End points are kept.
    pub fn quantize(&self, tick: f64) -> Result<Self> {
        if !(tick > 0.0) {
            return Err(Error::Validation(format!("tick must be positive, got {tick}")));
        }
        let horizon = self.horizon();
        let n = self.breakpoints.len();
        let rounded: Vec<f64> = self
            .breakpoints
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                if k == 0 || k == n - 1 {
                    b
                } else {
                    ((b / tick).round() * tick).clamp(0.0, horizon)
                }
            })
            .collect();
        let mut bps = vec![0.0];
        let mut segs = Vec::with_capacity(self.segments.len());
        for (k, seg) in self.segments.iter().enumerate() {
            let right = rounded[k + 1];
            if right > *bps.last().unwrap() {
                segs.push(seg.clone());
                bps.push(right);
            }
        }
        if segs.is_empty() {
            return Err(Error::Validation("quantization removed every segment".into()));
        }
        // the last kept segment always ends at the horizon
        *bps.last_mut().unwrap() = horizon;
        Self::new(bps, segs)
    }

    /// Restriction to `[start, horizon]`, shifted so that it starts at 0.
    pub fn shift_origin(&self, start: f64) -> Result<Self> {
        let horizon = self.horizon();
        if !(start >= 0.0 && start < horizon) {
            return Err(Error::Domain(format!("new origin {start} outside [0, {horizon})")));
        }
        let first = self.segment_index(start)?;
        let mut bps = vec![0.0];
        bps.extend(self.breakpoints[first + 1..].iter().map(|&b| b - start));
        let segs = self.segments[first..].to_vec();
        Self::new(bps, segs)
    }

    /// Largest state index used, if any.
    pub fn max_state(&self) -> Option<usize> {
        self.segments.iter().filter_map(|s| s.as_slice().last().copied()).max()
    }

    /// Checks the cardinality rule of `mode`: singletons for TDS, anything for TCATA.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        if mode == Mode::Tds {
            if let Some((k, s)) = self.segments.iter().enumerate().find(|(_, s)| s.len() != 1) {
                return Err(Error::Protocol(format!(
                    "TDS segment {k} holds {} states, expected exactly one",
                    s.len()
                )));
            }
        }
        Ok(())
    }

    /// 0-1 encoding: component `j` equals 1 exactly when `j` is in the active subset.
    pub fn to_indicators(&self, space: &StateSpace) -> Result<IndicatorVectorTrajectory> {
        let q = space.len();
        let mut values = Vec::with_capacity(self.segments.len());
        for (k, seg) in self.segments.iter().enumerate() {
            let mut v = vec![0u8; q];
            for j in seg.iter() {
                if j >= q {
                    return Err(Error::Validation(format!(
                        "segment {k} references state index {j}, but the state space has {q} states"
                    )));
                }
                v[j] = 1;
            }
            values.push(v);
        }
        Ok(IndicatorVectorTrajectory {
            breakpoints: self.breakpoints.clone(),
            values,
        })
    }
}

/// Vector of `q` 0-1 step functions sharing breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorVectorTrajectory {
    breakpoints: Vec<f64>,
    values: Vec<Vec<u8>>,
}

impl IndicatorVectorTrajectory {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<u8>>) -> Result<Self> {
        check_breakpoints(&breakpoints, values.len())?;
        let q = values[0].len();
        for (k, v) in values.iter().enumerate() {
            if v.len() != q {
                return Err(Error::Validation(format!(
                    "segment {k} has {} components, expected {q}",
                    v.len()
                )));
            }
            if v.iter().any(|&x| x > 1) {
                return Err(Error::Validation(format!("segment {k} has a non 0-1 entry")));
            }
        }
        Ok(IndicatorVectorTrajectory { breakpoints, values })
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<u8>] {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }

    /// Value of component `j` at time `t` (right-continuous).
    pub fn value(&self, j: usize, t: f64) -> Result<u8> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
        }
        let k = (self.breakpoints.partition_point(|&b| b <= t) - 1).min(self.values.len() - 1);
        Ok(self.values[k][j])
    }

    /// Inverse of [`CategoricalTrajectory::to_indicators`].
    pub fn to_categorical(&self) -> Result<CategoricalTrajectory> {
        let segs = self
            .values
            .iter()
            .map(|v| v.iter().enumerate().filter(|(_, &x)| x == 1).map(|(j, _)| j).collect())
            .collect();
        CategoricalTrajectory::new(self.breakpoints.clone(), segs)
    }
}

/// Partition of `[0, T]` into cells `[u_a, u_{a+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    nodes: Vec<f64>,
}

impl CellGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Validation("a grid needs at least two nodes".into()));
        }
        check_breakpoints(&nodes, nodes.len() - 1)?;
        Ok(CellGrid { nodes })
    }

    /// `m` cells of equal length on `[0, horizon]`.
    pub fn uniform(horizon: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Validation("uniform grid needs at least one cell".into()));
        }
        let mut nodes: Vec<f64> = (0..=m).map(|a| horizon * a as f64 / m as f64).collect();
        nodes[m] = horizon;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cell lengths `u_{a+1} - u_a`.
    pub fn lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn cell(&self, a: usize) -> (f64, f64) {
        (self.nodes[a], self.nodes[a + 1])
    }

    /// True when every breakpoint of `breakpoints` is a grid node.
    pub fn refines(&self, breakpoints: &[f64]) -> bool {
        breakpoints
            .iter()
            .all(|b| self.nodes.binary_search_by(|x| x.total_cmp(b)).is_ok())
    }
}

/// Sorted, deduplicated union of the breakpoints of every trajectory.
pub fn union_grid(panel: &[IndicatorVectorTrajectory]) -> Result<CellGrid> {
    union_grid_of(panel.iter().map(|t| t.breakpoints()))
}

/// [`union_grid`] for categorical trajectories.
pub fn union_grid_categorical(panel: &[CategoricalTrajectory]) -> Result<CellGrid> {
    union_grid_of(panel.iter().map(|t| t.breakpoints()))
}

pub(crate) fn union_grid_of<'a>(bps: impl Iterator<Item = &'a [f64]>) -> Result<CellGrid> {
    let bps: Vec<&[f64]> = bps.collect();
    let Some(first) = bps.first() else {
        return Err(Error::Validation("cannot build a grid from an empty panel".into()));
    };
    let horizon = *first.last().unwrap();
    let offenders: Vec<String> = bps
        .iter()
        .enumerate()
        .filter(|(_, b)| *b.last().unwrap() != horizon)
        .map(|(i, b)| format!("#{i} (T = {})", b.last().unwrap()))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Validation(format!(
            "trajectories do not share the horizon {horizon}: {}",
            offenders.join(", ")
        )));
    }
    let mut nodes: Vec<f64> = bps.iter().flat_map(|b| b.iter().copied()).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    CellGrid::new(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(q: usize) -> StateSpace {
        StateSpace::new((1..=q).map(|j| format!("S{j}"))).unwrap()
    }

    fn two_halves() -> CategoricalTrajectory {
        CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], &[0, 1]).unwrap()
    }

    #[test]
    fn state_space_rejects_duplicates_and_empty() {
        assert!(StateSpace::new(Vec::<String>::new()).is_err());
        assert!(StateSpace::new(["A", "A"]).is_err());
        assert!(StateSpace::new(["A", " "]).is_err());
        let s = StateSpace::new(["A", "B"]).unwrap();
        assert_eq!(s.index_of("B"), Some(1));
        assert_eq!(s.index_of("C"), None);
    }

    #[test]
    fn constant_tds_indicators() {
        let t = CategoricalTrajectory::constant(1.0, StateSet::singleton(0)).unwrap();
        let x = t.to_indicators(&space(2)).unwrap();
        assert_eq!(x.breakpoints(), &[0.0, 1.0]);
        assert_eq!(x.values(), &[vec![1, 0]]);
    }

    #[test]
    fn two_segment_tds_indicators() {
        let x = two_halves().to_indicators(&space(2)).unwrap();
        assert_eq!(x.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(x.values(), &[vec![1, 0], vec![0, 1]]);
        assert_eq!(x.value(0, 0.49).unwrap(), 1);
        assert_eq!(x.value(1, 0.5).unwrap(), 1);
        assert_eq!(x.value(1, 1.0).unwrap(), 1);
    }

    #[test]
    fn tcata_indicators_with_empty_segment() {
        let t = CategoricalTrajectory::new(
            vec![0.0, 0.3, 1.0],
            vec![StateSet::from(vec![0, 1]), StateSet::empty()],
        )
        .unwrap();
        let x = t.to_indicators(&space(3)).unwrap();
        assert_eq!(x.values(), &[vec![1, 1, 0], vec![0, 0, 0]]);
    }

    #[test]
    fn unknown_state_names_segment() {
        let t = CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], &[0, 4]).unwrap();
        let err = t.to_indicators(&space(2)).unwrap_err().to_string();
        assert!(err.contains("segment 1"), "{err}");
    }

    #[test]
    fn evaluate_right_continuous() {
        let t = two_halves();
        assert_eq!(t.evaluate(0.5).unwrap(), &StateSet::singleton(1));
        assert_eq!(t.evaluate(0.0).unwrap(), &StateSet::singleton(0));
        assert_eq!(t.evaluate(1.0).unwrap(), &StateSet::singleton(1));
        assert!(matches!(t.evaluate(1.5), Err(Error::Domain(_))));
        assert!(matches!(t.evaluate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn normalize_time_rescales() {
        let t = CategoricalTrajectory::from_states(vec![0.0, 3.0, 10.0], &[0, 1]).unwrap();
        assert_eq!(t.normalize_time().unwrap().breakpoints(), &[0.0, 0.3, 1.0]);
        let t = CategoricalTrajectory::from_states(vec![0.0, 2.5, 5.0], &[0, 1]).unwrap();
        assert_eq!(t.normalize_time().unwrap().breakpoints(), &[0.0, 0.5, 1.0]);
        let t = two_halves();
        assert_eq!(t.normalize_time().unwrap(), t);
    }

    #[test]
    fn canonical_form() {
        let t = CategoricalTrajectory::from_states(vec![0.0, 0.2, 0.6, 1.0], &[1, 1, 0]).unwrap();
        assert_eq!(t.breakpoints(), &[0.0, 0.6, 1.0]);
        assert!(CategoricalTrajectory::from_states(vec![0.0, 0.5, 0.5, 1.0], &[0, 1, 0]).is_err());
        assert!(CategoricalTrajectory::from_states(vec![0.1, 1.0], &[0]).is_err());
        assert!(CategoricalTrajectory::from_states(vec![0.0, f64::NAN], &[0]).is_err());
    }

    #[test]
    fn quantize_drops_collapsed_segments() {
        let t = CategoricalTrajectory::from_states(
            vec![0.0, 0.300_000_1, 0.300_000_4, 1.0],
            &[0, 1, 2],
        )
        .unwrap();
        let r = t.quantize(1e-6).unwrap();
        assert_eq!(r.n_segments(), 2);
        assert_eq!(r.segments()[1], StateSet::singleton(2));
        assert_eq!(r.horizon(), 1.0);
    }

    #[test]
    fn shift_origin_keeps_tail() {
        let t = CategoricalTrajectory::new(
            vec![0.0, 2.0, 5.0, 12.0],
            vec![StateSet::empty(), StateSet::singleton(0), StateSet::singleton(1)],
        )
        .unwrap();
        let s = t.shift_origin(2.0).unwrap();
        assert_eq!(s.breakpoints(), &[0.0, 3.0, 10.0]);
        assert_eq!(s.segments()[0], StateSet::singleton(0));
    }

    #[test]
    fn union_grid_examples() {
        let a = two_halves().to_indicators(&space(2)).unwrap();
        let b = CategoricalTrajectory::from_states(vec![0.0, 0.3, 1.0], &[1, 0])
            .unwrap()
            .to_indicators(&space(2))
            .unwrap();
        let g = union_grid(&[a.clone(), b]).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.3, 0.5, 1.0]);
        assert_eq!(union_grid(&[a.clone()]).unwrap().nodes(), a.breakpoints());
        assert_eq!(
            union_grid(&[a.clone(), a.clone(), a.clone()]).unwrap().nodes(),
            a.breakpoints()
        );
    }

    #[test]
    fn union_grid_rejects_mismatched_horizons() {
        let a = two_halves().to_indicators(&space(2)).unwrap();
        let b = CategoricalTrajectory::from_states(vec![0.0, 2.0], &[0])
            .unwrap()
            .to_indicators(&space(2))
            .unwrap();
        let err = union_grid(&[a, b]).unwrap_err().to_string();
        assert!(err.contains("#1"), "{err}");
    }

    #[test]
    fn mode_check() {
        let t = CategoricalTrajectory::new(
            vec![0.0, 0.5, 1.0],
            vec![StateSet::from(vec![0, 1]), StateSet::singleton(0)],
        )
        .unwrap();
        assert!(t.check_mode(Mode::Tcata).is_ok());
        assert!(matches!(t.check_mode(Mode::Tds), Err(Error::Protocol(_))));
    }

    #[test]
    fn serde_roundtrip_validates() {
        let t = two_halves();
        let s = serde_json::to_string(&t).unwrap();
        let back: CategoricalTrajectory = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"breakpoints":[0.0,0.0,1.0],"segments":[[0],[1]]}"#;
        assert!(serde_json::from_str::<CategoricalTrajectory>(bad).is_err());
        let sp: StateSpace = serde_json::from_str(r#"["A","B"]"#).unwrap();
        assert_eq!(sp.index_of("B"), Some(1));
    }
}
