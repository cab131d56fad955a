//! Event-log ingestion.
//!
//! Input is a CSV file with the header `subject,product,descriptor,onset,offset`
//! (`offset` may be empty or the column omitted) plus a JSON sidecar declaring
//! the descriptor list, the protocol and the tasting end times:
//!
//! ```json
//! {
//!   "descriptors": ["Acid", "Sweet"],
//!   "mode": "TDS",
//!   "default_end": 10.0,
//!   "end_times": [{"subject": "s1", "product": "P1", "end": 12.5}]
//! }
//! ```
//!
//! An `end_times` entry without `product` applies to every product of that
//! subject. Entries naming a `(subject, product)` pair that has no rows still
//! produce a trajectory (constantly empty for TCATA).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{
    union_grid_of, CategoricalTrajectory, CellGrid, IndicatorVectorTrajectory, Mode,
    StateSet, StateSpace,
};

/// Default rounding tick applied after time normalization.
pub const DEFAULT_TICK: f64 = 1e-6;

/// One row of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub subject: String,
    pub product: String,
    pub descriptor: String,
    pub onset: f64,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    pub offset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndTime {
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<String>,
    pub end: f64,
}

/// JSON sidecar accompanying an event CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub descriptors: Vec<String>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_end: Option<f64>,
    #[serde(default)]
    pub end_times: Vec<EndTime>,
}

impl Sidecar {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        StateSpace::new(self.descriptors.iter().cloned())
    }

    fn end_for(&self, subject: &str, product: &str) -> Option<f64> {
        self.end_times
            .iter()
            .find(|e| e.subject == subject && e.product.as_deref() == Some(product))
            .or_else(|| {
                self.end_times
                    .iter()
                    .find(|e| e.subject == subject && e.product.is_none())
            })
            .map(|e| e.end)
            .or(self.default_end)
    }
}

/// One trajectory of a panel, labelled by subject and product/condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelItem {
    pub subject: String,
    pub condition: String,
    pub trajectory: CategoricalTrajectory,
}

/// Sample of categorical trajectories over a common state space.
///
/// A raw TDS panel may start each trajectory with an empty latency segment;
/// after [`apply_protocol_normalization`] every trajectory lives on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanelRepr", into = "PanelRepr")]
pub struct Panel {
    space: StateSpace,
    mode: Mode,
    normalized: bool,
    items: Vec<PanelItem>,
}

#[derive(Serialize, Deserialize)]
struct PanelRepr {
    states: StateSpace,
    mode: Mode,
    normalized: bool,
    items: Vec<PanelItem>,
}

impl TryFrom<PanelRepr> for Panel {
    type Error = Error;

    fn try_from(r: PanelRepr) -> Result<Self> {
        Panel::new(r.states, r.mode, r.normalized, r.items)
    }
}

impl From<Panel> for PanelRepr {
    fn from(p: Panel) -> Self {
        PanelRepr {
            states: p.space,
            mode: p.mode,
            normalized: p.normalized,
            items: p.items,
        }
    }
}

impl Panel {
    pub fn new(space: StateSpace, mode: Mode, normalized: bool, items: Vec<PanelItem>) -> Result<Self> {
        let q = space.len();
        for item in &items {
            let name = || format!("{}/{}", item.subject, item.condition);
            let traj = &item.trajectory;
            if let Some(j) = traj.max_state() {
                if j >= q {
                    return Err(Error::Validation(format!(
                        "trajectory {} uses state index {j} outside the {q} declared states",
                        name()
                    )));
                }
            }
            if normalized && traj.horizon() != 1.0 {
                return Err(Error::Validation(format!(
                    "normalized trajectory {} has horizon {}",
                    name(),
                    traj.horizon()
                )));
            }
            if mode == Mode::Tds {
                let segs = traj.segments();
                // raw TDS trajectories may open with the latency before the first click
                let body = if !normalized && segs[0].is_empty() {
                    &segs[1..]
                } else {
                    segs
                };
                if let Some(s) = body.iter().find(|s| s.len() != 1) {
                    return Err(Error::Protocol(format!(
                        "TDS trajectory {} has a segment with {} states",
                        name(),
                        s.len()
                    )));
                }
            }
        }
        Ok(Panel {
            space,
            mode,
            normalized,
            items,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn items(&self) -> &[PanelItem] {
        &self.items
    }

    /// Sample size `n`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &CategoricalTrajectory> + '_ {
        self.items.iter().map(|i| &i.trajectory)
    }

    pub fn indicators(&self) -> Result<Vec<IndicatorVectorTrajectory>> {
        self.trajectories().map(|t| t.to_indicators(&self.space)).collect()
    }

    /// Union of all breakpoints.
    pub fn union_grid(&self) -> Result<CellGrid> {
        union_grid_of(self.trajectories().map(|t| t.breakpoints()))
    }

    /// Applies `f` to every trajectory, keeping labels.
    pub fn map_trajectories<F>(&self, normalized: bool, mut f: F) -> Result<Panel>
    where
        F: FnMut(&CategoricalTrajectory) -> Result<CategoricalTrajectory>,
    {
        let items = self
            .items
            .iter()
            .map(|i| {
                Ok(PanelItem {
                    subject: i.subject.clone(),
                    condition: i.condition.clone(),
                    trajectory: f(&i.trajectory)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Panel::new(self.space.clone(), self.mode, normalized, items)
    }

    /// Marks the panel as living on `[0, 1]`; fails unless every horizon is 1.
    pub fn into_normalized(self) -> Result<Panel> {
        Panel::new(self.space, self.mode, true, self.items)
    }

    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// Per-state click statistics gathered while parsing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateClickStats {
    pub state: String,
    pub clicks: usize,
    pub trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub subject: String,
    pub condition: String,
    pub reason: String,
}

/// Outcome summary of an ingestion run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub trajectories: usize,
    pub warnings: usize,
    pub warning_messages: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub state_stats: Vec<StateClickStats>,
}

impl IngestReport {
    fn warn(&mut self, msg: String) {
        self.warnings += 1;
        self.warning_messages.push(msg);
    }
}

/// Reads event rows from CSV. Errors carry the 1-based line number.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<EventRecord>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Validation(format!("row {line}: {e}")))?;
        if !rec.onset.is_finite() || rec.onset < 0.0 {
            return Err(Error::Validation(format!(
                "row {line}: onset must be a non-negative number, got {}",
                rec.onset
            )));
        }
        if let Some(off) = rec.offset {
            if !off.is_finite() || off <= rec.onset {
                return Err(Error::Validation(format!(
                    "row {line}: offset {off} must exceed onset {}",
                    rec.onset
                )));
            }
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Writes rows in the ingestion CSV schema.
pub fn write_events<W: Write>(rows: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject", "product", "descriptor", "onset", "offset"])?;
    for r in rows {
        let offset = r.offset.map(|o| o.to_string()).unwrap_or_default();
        w.write_record([
            r.subject.as_str(),
            r.product.as_str(),
            r.descriptor.as_str(),
            &r.onset.to_string(),
            &offset,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by `(subject, product)` and builds one raw trajectory per group
/// on `[0, end]`.
pub fn parse_events(rows: &[EventRecord], sidecar: &Sidecar) -> Result<(Panel, IngestReport)> {
    let space = sidecar.state_space()?;
    let q = space.len();
    let mut report = IngestReport {
        rows: rows.len(),
        ..Default::default()
    };

    let mut groups: BTreeMap<(String, String), Vec<(usize, usize, &EventRecord)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let j = space.index_of(&r.descriptor).ok_or_else(|| {
            Error::Validation(format!(
                "row {}: descriptor '{}' is not declared",
                i + 2,
                r.descriptor
            ))
        })?;
        groups
            .entry((r.subject.clone(), r.product.clone()))
            .or_default()
            .push((i, j, r));
    }
    for e in &sidecar.end_times {
        if let Some(p) = &e.product {
            groups.entry((e.subject.clone(), p.clone())).or_default();
        }
    }

    let mut clicks = vec![0usize; q];
    let mut seen_in = vec![0usize; q];
    let mut items = Vec::with_capacity(groups.len());
    for ((subject, product), group) in &groups {
        let end = sidecar.end_for(subject, product).ok_or_else(|| {
            Error::Validation(format!("no tasting end time for {subject}/{product}"))
        })?;
        if !(end.is_finite() && end > 0.0) {
            return Err(Error::Validation(format!(
                "tasting end time for {subject}/{product} must be positive, got {end}"
            )));
        }
        let trajectory = match sidecar.mode {
            Mode::Tds => parse_tds_group(subject, product, group, end, &mut report)?,
            Mode::Tcata => parse_tcata_group(subject, product, group, end, &mut report)?,
        };
        let mut used = BTreeSet::new();
        for &(_, j, _) in group {
            clicks[j] += 1;
            used.insert(j);
        }
        for j in used {
            seen_in[j] += 1;
        }
        items.push(PanelItem {
            subject: subject.clone(),
            condition: product.clone(),
            trajectory,
        });
    }
    report.trajectories = items.len();
    report.state_stats = (0..q)
        .map(|j| StateClickStats {
            state: space.label(j).to_string(),
            clicks: clicks[j],
            trajectories: seen_in[j],
        })
        .collect();
    let panel = Panel::new(space, sidecar.mode, false, items)?;
    Ok((panel, report))
}

fn parse_tds_group(
    subject: &str,
    product: &str,
    group: &[(usize, usize, &EventRecord)],
    end: f64,
    report: &mut IngestReport,
) -> Result<CategoricalTrajectory> {
    let mut events: Vec<(usize, usize, &EventRecord)> = group.to_vec();
    // ties on onset keep file order, so the later row wins below
    events.sort_by(|a, b| a.2.onset.total_cmp(&b.2.onset).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, &EventRecord)> = Vec::with_capacity(events.len());
    for ev in events {
        if ev.2.onset >= end {
            report.warn(format!(
                "{subject}/{product}: row {} starts at or after the tasting end {end}, ignored",
                ev.0 + 2
            ));
            continue;
        }
        if let Some(last) = kept.last_mut() {
            if last.2.onset == ev.2.onset {
                report.warn(format!(
                    "{subject}/{product}: simultaneous clicks at {} (rows {} and {}), keeping the later row",
                    ev.2.onset,
                    last.0 + 2,
                    ev.0 + 2
                ));
                *last = ev;
                continue;
            }
        }
        kept.push(ev);
    }
    for w in kept.windows(2) {
        if let Some(off) = w[0].2.offset {
            if off > w[1].2.onset {
                return Err(Error::Protocol(format!(
                    "subject {subject} ({product}): dominance of '{}' (row {}) ends at {off}, after '{}' (row {}) starts at {}",
                    w[0].2.descriptor,
                    w[0].0 + 2,
                    w[1].2.descriptor,
                    w[1].0 + 2,
                    w[1].2.onset
                )));
            }
        }
    }
    if kept.is_empty() {
        return CategoricalTrajectory::constant(end, StateSet::empty());
    }
    let mut bps = Vec::with_capacity(kept.len() + 2);
    let mut segs = Vec::with_capacity(kept.len() + 1);
    bps.push(0.0);
    if kept[0].2.onset > 0.0 {
        segs.push(StateSet::empty());
        bps.push(kept[0].2.onset);
    }
    for (k, ev) in kept.iter().enumerate() {
        segs.push(StateSet::singleton(ev.1));
        bps.push(kept.get(k + 1).map_or(end, |n| n.2.onset));
    }
    CategoricalTrajectory::new(bps, segs)
}

fn parse_tcata_group(
    subject: &str,
    product: &str,
    group: &[(usize, usize, &EventRecord)],
    end: f64,
    report: &mut IngestReport,
) -> Result<CategoricalTrajectory> {
    let mut intervals: Vec<(usize, f64, f64)> = Vec::with_capacity(group.len());
    for &(row, j, ev) in group {
        if ev.onset >= end {
            report.warn(format!(
                "{subject}/{product}: row {} starts at or after the tasting end {end}, ignored",
                row + 2
            ));
            continue;
        }
        let off = match ev.offset {
            None => {
                report.warn(format!(
                    "{subject}/{product}: row {} ('{}') never unselected, closed at {end}",
                    row + 2,
                    ev.descriptor
                ));
                end
            }
            Some(o) if o > end => {
                report.warn(format!(
                    "{subject}/{product}: row {} ('{}') runs past the tasting end, clipped to {end}",
                    row + 2,
                    ev.descriptor
                ));
                end
            }
            Some(o) => o,
        };
        intervals.push((j, ev.onset, off));
    }
    let mut cuts: Vec<f64> = vec![0.0, end];
    for &(_, on, off) in &intervals {
        cuts.push(on);
        cuts.push(off);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let segs: Vec<StateSet> = cuts
        .windows(2)
        .map(|w| {
            intervals
                .iter()
                .filter(|&&(_, on, off)| on <= w[0] && w[1] <= off)
                .map(|&(j, _, _)| j)
                .collect()
        })
        .collect();
    CategoricalTrajectory::new(cuts, segs)
}

/// Brings every trajectory onto `[0, 1]` following the protocol rules.
///
/// TDS: the latency before the first click is cut, then time is rescaled, so
/// one state is active everywhere. Trajectories without any click are
/// rejected and returned separately.
///
/// TCATA: the latency is kept; after rescaling, states are forced off on the
/// first and last `tick` so every trajectory starts and ends empty.
///
/// Breakpoints are rounded to multiples of `tick` in both cases.
pub fn apply_protocol_normalization(panel: &Panel, tick: f64) -> Result<(Panel, Vec<Rejection>)> {
    if !(tick > 0.0 && tick < 0.5) {
        return Err(Error::Validation(format!("tick must lie in (0, 0.5), got {tick}")));
    }
    let mut rejected = Vec::new();
    let mut items = Vec::with_capacity(panel.len());
    for item in panel.items() {
        let traj = &item.trajectory;
        let normalized = match panel.mode() {
            Mode::Tds => {
                let Some(first) = traj.iter_segments().find(|(_, _, s)| !s.is_empty()) else {
                    rejected.push(Rejection {
                        subject: item.subject.clone(),
                        condition: item.condition.clone(),
                        reason: "TDS trajectory without any click".into(),
                    });
                    continue;
                };
                let shifted = if panel.is_normalized() {
                    traj.clone()
                } else {
                    traj.shift_origin(first.0)?
                };
                shifted.normalize_time()?.quantize(tick)?
            }
            Mode::Tcata => {
                let t = traj.normalize_time()?;
                empty_outside(&t, tick, 1.0 - tick)?.quantize(tick)?
            }
        };
        items.push(PanelItem {
            subject: item.subject.clone(),
            condition: item.condition.clone(),
            trajectory: normalized,
        });
    }
    if items.is_empty() && !panel.is_empty() {
        return Err(Error::Validation("every trajectory was rejected during normalization".into()));
    }
    Ok((Panel::new(panel.space().clone(), panel.mode(), true, items)?, rejected))
}

/// Same trajectory with the empty subset on `[0, lo)` and `[hi, T]`.
fn empty_outside(traj: &CategoricalTrajectory, lo: f64, hi: f64) -> Result<CategoricalTrajectory> {
    let horizon = traj.horizon();
    let mut bps = vec![0.0];
    let mut segs = Vec::new();
    let mut push = |right: f64, s: StateSet, bps: &mut Vec<f64>| {
        if right > *bps.last().unwrap() {
            segs.push(s);
            bps.push(right);
        }
    };
    for (l, r, s) in traj.iter_segments() {
        push(lo.clamp(l, r), StateSet::empty(), &mut bps);
        push(hi.clamp(l, r), s.clone(), &mut bps);
        push(r, StateSet::empty(), &mut bps);
    }
    *bps.last_mut().unwrap() = horizon;
    CategoricalTrajectory::new(bps, segs)
}

/// Converts a panel back to event rows: one row per TDS segment (no offset)
/// or one row per maximal TCATA selection run.
pub fn panel_to_events(panel: &Panel) -> Vec<EventRecord> {
    let space = panel.space();
    let mut rows = Vec::new();
    for item in panel.items() {
        let traj = &item.trajectory;
        let row = |j: usize, onset: f64, offset: Option<f64>| EventRecord {
            subject: item.subject.clone(),
            product: item.condition.clone(),
            descriptor: space.label(j).to_string(),
            onset,
            offset,
        };
        match panel.mode() {
            Mode::Tds => {
                for (l, _, s) in traj.iter_segments() {
                    if let Some(j) = s.iter().next() {
                        rows.push(row(j, l, None));
                    }
                }
            }
            Mode::Tcata => {
                for j in 0..space.len() {
                    let mut start: Option<f64> = None;
                    for (l, r, s) in traj.iter_segments() {
                        match (s.contains(j), start) {
                            (true, None) => start = Some(l),
                            (false, Some(on)) => {
                                rows.push(row(j, on, Some(l)));
                                start = None;
                            }
                            _ => {}
                        }
                        if r == traj.horizon() {
                            if let Some(on) = start.take() {
                                rows.push(row(j, on, Some(r)));
                            }
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Sidecar describing `panel`, with an explicit end time per trajectory.
pub fn sidecar_for(panel: &Panel) -> Sidecar {
    Sidecar {
        descriptors: panel.space().labels().to_vec(),
        mode: panel.mode(),
        default_end: None,
        end_times: panel
            .items()
            .iter()
            .map(|i| EndTime {
                subject: i.subject.clone(),
                product: Some(i.condition.clone()),
                end: i.trajectory.horizon(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(subject: &str, d: &str, onset: f64, offset: Option<f64>) -> EventRecord {
        EventRecord {
            subject: subject.into(),
            product: "P".into(),
            descriptor: d.into(),
            onset,
            offset,
        }
    }

    fn sidecar(mode: Mode, end: f64) -> Sidecar {
        Sidecar {
            descriptors: vec!["A".into(), "B".into(), "C".into()],
            mode,
            default_end: Some(end),
            end_times: vec![],
        }
    }

    #[test]
    fn tds_consecutive_dominance() {
        let rows = [rec("s", "A", 0.0, None), rec("s", "B", 4.0, None)];
        let (panel, report) = parse_events(&rows, &sidecar(Mode::Tds, 10.0)).unwrap();
        let t = &panel.items()[0].trajectory;
        assert_eq!(t.breakpoints(), &[0.0, 4.0, 10.0]);
        assert_eq!(t.segments(), &[StateSet::singleton(0), StateSet::singleton(1)]);
        assert_eq!(report.warnings, 0);
    }

    #[test]
    fn tcata_interval_overlay() {
        let rows = [rec("s", "A", 1.0, Some(3.0)), rec("s", "B", 2.0, Some(5.0))];
        let (panel, report) = parse_events(&rows, &sidecar(Mode::Tcata, 10.0)).unwrap();
        let t = &panel.items()[0].trajectory;
        assert_eq!(t.breakpoints(), &[0.0, 1.0, 2.0, 3.0, 5.0, 10.0]);
        assert_eq!(
            t.segments(),
            &[
                StateSet::empty(),
                StateSet::singleton(0),
                StateSet::from(vec![0, 1]),
                StateSet::singleton(1),
                StateSet::empty()
            ]
        );
        assert_eq!(report.warnings, 0);
    }

    #[test]
    fn tcata_subject_without_rows() {
        let mut sc = sidecar(Mode::Tcata, 10.0);
        sc.end_times.push(EndTime {
            subject: "quiet".into(),
            product: Some("P".into()),
            end: 10.0,
        });
        let (panel, _) = parse_events(&[], &sc).unwrap();
        assert_eq!(panel.len(), 1);
        let t = &panel.items()[0].trajectory;
        assert_eq!(t.breakpoints(), &[0.0, 10.0]);
        assert!(t.segments()[0].is_empty());
    }

    #[test]
    fn tds_overlap_is_protocol_error() {
        let rows = [rec("bob", "A", 0.0, Some(5.0)), rec("bob", "B", 4.0, None)];
        let err = parse_events(&rows, &sidecar(Mode::Tds, 10.0)).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        assert!(err.to_string().contains("bob"));
    }

    #[test]
    fn tds_ties_keep_last_row() {
        let rows = [
            rec("s", "A", 0.0, None),
            rec("s", "B", 2.0, None),
            rec("s", "C", 2.0, None),
        ];
        let (panel, report) = parse_events(&rows, &sidecar(Mode::Tds, 10.0)).unwrap();
        assert_eq!(report.warnings, 1);
        assert_eq!(panel.items()[0].trajectory.segments()[1], StateSet::singleton(2));
    }

    #[test]
    fn tcata_unclosed_interval_warns() {
        let rows = [rec("s", "A", 1.0, None)];
        let (panel, report) = parse_events(&rows, &sidecar(Mode::Tcata, 10.0)).unwrap();
        assert_eq!(report.warnings, 1);
        assert_eq!(panel.items()[0].trajectory.breakpoints(), &[0.0, 1.0, 10.0]);
    }

    #[test]
    fn undeclared_descriptor_names_row() {
        let rows = [rec("s", "A", 0.0, None), rec("s", "Z", 1.0, None)];
        let err = parse_events(&rows, &sidecar(Mode::Tds, 10.0)).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
    }

    #[test]
    fn missing_end_time() {
        let mut sc = sidecar(Mode::Tds, 10.0);
        sc.default_end = None;
        assert!(parse_events(&[rec("s", "A", 0.0, None)], &sc).is_err());
    }

    #[test]
    fn tds_latency_removed() {
        let rows = [rec("s", "A", 2.0, None), rec("s", "B", 7.0, None)];
        let (panel, _) = parse_events(&rows, &sidecar(Mode::Tds, 12.0)).unwrap();
        let (norm, rejected) = apply_protocol_normalization(&panel, DEFAULT_TICK).unwrap();
        assert!(rejected.is_empty());
        let t = &norm.items()[0].trajectory;
        assert_eq!(t.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(t.segments(), &[StateSet::singleton(0), StateSet::singleton(1)]);
    }

    #[test]
    fn tds_without_clicks_rejected() {
        let mut sc = sidecar(Mode::Tds, 12.0);
        sc.end_times.push(EndTime {
            subject: "mute".into(),
            product: Some("P".into()),
            end: 12.0,
        });
        let rows = [rec("s", "A", 2.0, None)];
        let (panel, _) = parse_events(&rows, &sc).unwrap();
        let (norm, rejected) = apply_protocol_normalization(&panel, DEFAULT_TICK).unwrap();
        assert_eq!(norm.len(), 1);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].subject, "mute");
    }

    #[test]
    fn tcata_keeps_latency_and_ends_empty() {
        let rows = [rec("s", "A", 2.0, Some(4.0)), rec("s", "B", 3.0, None)];
        let (panel, _) = parse_events(&rows, &sidecar(Mode::Tcata, 10.0)).unwrap();
        let (norm, _) = apply_protocol_normalization(&panel, DEFAULT_TICK).unwrap();
        let t = &norm.items()[0].trajectory;
        assert!(t.evaluate(0.0).unwrap().is_empty());
        assert!(t.evaluate(0.1).unwrap().is_empty());
        assert!(t.evaluate(1.0).unwrap().is_empty());
        assert_eq!(t.evaluate(0.25).unwrap(), &StateSet::singleton(0));
        assert_eq!(t.evaluate(0.35).unwrap(), &StateSet::from(vec![0, 1]));
        assert_eq!(t.evaluate(0.9).unwrap(), &StateSet::singleton(1));
    }

    #[test]
    fn tcata_click_at_zero_forced_off_first_tick() {
        let rows = [rec("s", "A", 0.0, None)];
        let (panel, _) = parse_events(&rows, &sidecar(Mode::Tcata, 1.0)).unwrap();
        let (norm, _) = apply_protocol_normalization(&panel, DEFAULT_TICK).unwrap();
        let t = &norm.items()[0].trajectory;
        assert_eq!(t.n_segments(), 3);
        assert!(t.evaluate(0.0).unwrap().is_empty());
        assert!(t.evaluate(1.0).unwrap().is_empty());
        assert_eq!(t.evaluate(0.5).unwrap(), &StateSet::singleton(0));
    }

    #[test]
    fn csv_roundtrip_through_events() {
        let rows = [
            rec("s1", "A", 1.0, Some(3.0)),
            rec("s1", "B", 2.0, Some(5.0)),
            rec("s2", "C", 0.5, Some(10.0)),
        ];
        let (panel, _) = parse_events(&rows, &sidecar(Mode::Tcata, 10.0)).unwrap();
        let mut buf = Vec::new();
        write_events(&panel_to_events(&panel), &mut buf).unwrap();
        let back = read_events(buf.as_slice()).unwrap();
        let (panel2, _) = parse_events(&back, &sidecar_for(&panel)).unwrap();
        assert_eq!(panel, panel2);
    }

    #[test]
    fn csv_reader_accepts_missing_offset_column() {
        let data = "subject,product,descriptor,onset\ns,P,A,0\ns,P,B,4.5\n";
        let rows = read_events(data.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].offset, None);
        let bad = "subject,product,descriptor,onset,offset\ns,P,A,3,1\n";
        let err = read_events(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }
}
