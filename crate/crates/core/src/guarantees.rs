//! Lower and upper bounds on the error of a frozen rule over the
//! uncertainty set, per sensitive group and overall.
//!
//! For a group g the worst case is the linear-fractional program
//! `max cᵀp / eᵀp` over distributions p on the audit instances whose
//! feature-map mean stays in the band `τ ± λ`, with `cᵢ = lossᵢ·[gᵢ = g]`
//! and `eᵢ = [gᵢ = g]`. With `q = p/eᵀp`, `z = 1/eᵀp` it becomes the LP
//!
//! ```text
//! max cᵀq  s.t.  z(τ − λ) ⪯ Σ Φᵢ qᵢ ⪯ z(τ + λ),  Σ qᵢ = z,  eᵀq = 1,  q, z ≥ 0
//! ```
//!
//! and the extremal distribution is recovered as `p = q/z`. The overall
//! bound fixes `z = 1`. Band rows are added lazily since only a few of the
//! 2m are ever binding.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::lp::{solve_lp_dual, solve_lp_lazy, Constraint, LinearProgram, LpStatus, Relation, Sense};
use crate::mrc::{build_uncertainty, MrcModel, UncertaintySet};
use crate::spectral::{embed_blocks, SpectralMap};

/// Smallest admissible `z` of a group LP.
pub const Z_GUARD: f64 = 1e-12;
/// Audit groups smaller than this get bounds flagged as low confidence.
pub const MIN_GROUP_SIZE: usize = 40;

/// Instances on which a frozen rule is audited.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSet {
    /// Row of each audit instance in the source dataset.
    pub instances: Vec<usize>,
    /// Rows Φ(xᵢ, yᵢ).
    pub phi_matrix: Array2<f64>,
    pub labels: Vec<usize>,
    /// Loss of the rule on each instance, in [0, 1].
    pub losses: Vec<f64>,
    pub groups: Option<Vec<usize>>,
}

impl AuditSet {
    pub fn new(
        instances: Vec<usize>,
        phi_matrix: Array2<f64>,
        labels: Vec<usize>,
        losses: Vec<f64>,
        groups: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = phi_matrix.nrows();
        if n == 0 {
            return invalid("audit set is empty");
        }
        if instances.len() != n || labels.len() != n || losses.len() != n {
            return invalid("audit fields disagree in length");
        }
        if groups.as_ref().is_some_and(|g| g.len() != n) {
            return invalid("audit group ids disagree in length");
        }
        if let Some(bad) = losses.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return invalid(format!("audit loss {bad} outside [0, 1]"));
        }
        Ok(Self {
            instances,
            phi_matrix,
            labels,
            losses,
            groups,
        })
    }

    /// Audits the deterministic prediction rule of `model` on the rows
    /// `indices` of `ds`, with features embedded through `map` (which may
    /// differ from the model's own map, e.g. in σ or in frequency count).
    pub fn for_rule(model: &MrcModel, map: &SpectralMap, ds: &Dataset, indices: &[usize]) -> Result<Self> {
        let part = ds.subset(indices);
        let predictions = model.predict_batch(part.features())?;
        let losses = predictions
            .iter()
            .zip(part.labels())
            .map(|(p, y)| if p == y { 0.0 } else { 1.0 })
            .collect();
        Self::new(
            indices.to_vec(),
            map.apply_batch(&part)?,
            part.labels().to_vec(),
            losses,
            part.sensitive().map(<[usize]>::to_vec),
        )
    }

    /// Audits the randomized rule `h(y|x)` of `model` on every pair
    /// (xᵢ, y) with xᵢ a row of `ds` and y any label. The loss of a pair is
    /// the rule's expected 0-1 loss `1 − h(y|xᵢ)`. This support is the one
    /// the training objective ranges over, so the overall upper bound on it
    /// reproduces the model's worst-case risk.
    pub fn randomized_support(model: &MrcModel, ds: &Dataset) -> Result<Self> {
        let n_classes = model.n_classes();
        let blocks = model.map.block_matrix(ds.features())?;
        let proba = model.predict_proba_batch(ds.features())?;
        let n = ds.len();
        let mut instances = Vec::with_capacity(n * n_classes);
        let mut labels = Vec::with_capacity(n * n_classes);
        let mut losses = Vec::with_capacity(n * n_classes);
        for i in 0..n {
            for y in 0..n_classes {
                instances.push(i);
                labels.push(y);
                losses.push((1.0 - proba[[i, y]]).clamp(0.0, 1.0));
            }
        }
        let expanded = blocks.select(Axis(0), &instances);
        let phi = embed_blocks(&expanded, &labels, n_classes)?;
        Self::new(instances, phi, labels, losses, None)
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Distinct group ids present, ascending.
    pub fn group_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.groups.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.groups.iter().flatten().filter(|&&g| g == group).count()
    }

    /// Plain audit error of the rule within `group` (or overall).
    pub fn empirical_error(&self, group: Option<usize>) -> Option<f64> {
        let members = self.members(group).ok()?;
        let total: f64 = members.iter().map(|&i| self.losses[i]).sum();
        Some(total / members.len() as f64)
    }

    fn members(&self, group: Option<usize>) -> Result<Vec<usize>> {
        match group {
            None => Ok((0..self.len()).collect()),
            Some(g) => {
                let groups = self
                    .groups
                    .as_ref()
                    .ok_or_else(|| Error::Data("group bounds need sensitive attributes on the audit set".into()))?;
                let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
                if members.is_empty() {
                    return invalid(format!("group {g} has no audit instances"));
                }
                Ok(members)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// One solved side of a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSide {
    pub value: f64,
    /// Extremal distribution over the audit instances.
    pub weights: Vec<f64>,
    pub z: f64,
    pub status: LpStatus,
}

/// Error bounds for one group (`group = None` for the whole population).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBound {
    pub group: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    pub extremal_upper_weights: Vec<f64>,
    pub extremal_lower_weights: Vec<f64>,
    pub upper_status: LpStatus,
    pub lower_status: LpStatus,
    pub audit_size: usize,
    pub low_confidence: bool,
}

impl GroupBound {
    fn from_sides(group: Option<usize>, upper: BoundSide, lower: BoundSide, audit_size: usize) -> Self {
        Self {
            group,
            lower: lower.value,
            upper: upper.value,
            extremal_upper_weights: upper.weights,
            extremal_lower_weights: lower.weights,
            upper_status: upper.status,
            lower_status: lower.status,
            audit_size,
            low_confidence: group.is_some() && audit_size < MIN_GROUP_SIZE,
        }
    }

    pub fn weights(&self, side: Side) -> &[f64] {
        match side {
            Side::Upper => &self.extremal_upper_weights,
            Side::Lower => &self.extremal_lower_weights,
        }
    }

    pub fn value(&self, side: Side) -> f64 {
        match side {
            Side::Upper => self.upper,
            Side::Lower => self.lower,
        }
    }
}

fn check_dims(audit: &AuditSet, u: &UncertaintySet) -> Result<()> {
    if audit.phi_matrix.ncols() != u.dim() {
        return invalid(format!(
            "audit features have dimension {}, uncertainty set {}",
            audit.phi_matrix.ncols(),
            u.dim()
        ));
    }
    Ok(())
}

/// Band rows `Σ Φᵢ qᵢ − z(τ ± λ) ≶ 0`; `z_col` is absent when z is fixed to
/// one, in which case the band moves to the right-hand side.
fn band_rows(audit: &AuditSet, u: &UncertaintySet, z_col: Option<usize>, n_vars: usize) -> Vec<Constraint> {
    let n = audit.len();
    let mut rows = Vec::with_capacity(2 * u.dim());
    for (j, col) in audit.phi_matrix.axis_iter(Axis(1)).enumerate() {
        let hi = u.tau[j] + u.lambda[j];
        let lo = u.tau[j] - u.lambda[j];
        for (bound, relation) in [(hi, Relation::Le), (lo, Relation::Ge)] {
            let mut coeffs = vec![0.0; n_vars];
            coeffs[..n].iter_mut().zip(col.iter()).for_each(|(c, v)| *c = *v);
            let rhs = match z_col {
                Some(z) => {
                    coeffs[z] = -bound;
                    0.0
                }
                None => bound,
            };
            rows.push(Constraint::new(coeffs, relation, rhs));
        }
    }
    rows
}

fn sense(side: Side) -> Sense {
    match side {
        Side::Upper => Sense::Maximize,
        Side::Lower => Sense::Minimize,
    }
}

/// One side of the bound for `group` (None: overall, with z fixed to 1).
pub fn bound_side(audit: &AuditSet, u: &UncertaintySet, group: Option<usize>, side: Side) -> Result<BoundSide> {
    check_dims(audit, u)?;
    let members = audit.members(group)?;
    let n = audit.len();
    let (lp, lazy) = match group {
        Some(_) => {
            let mut objective = vec![0.0; n + 1];
            let mut indicator = vec![0.0; n + 1];
            for &i in &members {
                objective[i] = audit.losses[i];
                indicator[i] = 1.0;
            }
            let mut lp = LinearProgram::new(sense(side), objective);
            let mut total = vec![1.0; n + 1];
            total[n] = -1.0;
            lp.add(total, Relation::Eq, 0.0);
            lp.add(indicator, Relation::Eq, 1.0);
            // qᵢ ≤ z is implied by Σq = z and q ⪰ 0, so it is not added
            (lp, band_rows(audit, u, Some(n), n + 1))
        }
        None => {
            let mut lp = LinearProgram::new(sense(side), audit.losses.clone());
            lp.add(vec![1.0; n], Relation::Eq, 1.0);
            (lp, band_rows(audit, u, None, n))
        }
    };
    // dense simplex cost grows with the row count, so tall programs go
    // through their dual and wide ones through lazy band rows
    let sol = if lp.constraints.len() + lazy.len() > lp.n_vars() {
        let mut full = lp;
        full.constraints.extend(lazy);
        solve_lp_dual(&full)?
    } else {
        solve_lp_lazy(&lp, &lazy)?
    };
    let label = match group {
        Some(g) => format!("group {g}"),
        None => "overall".to_string(),
    };
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Solver(format!(
                "{label} {side:?} bound: no distribution on the audit set satisfies the moment band"
            )))
        }
        other => return Err(Error::Solver(format!("{label} {side:?} bound LP ended with status {other:?}"))),
    }
    let z = if group.is_some() { sol.x[n] } else { 1.0 };
    if z < Z_GUARD {
        return Err(Error::DegenerateGroup {
            group: group.unwrap_or(usize::MAX),
            message: format!("z* = {z:e} below {Z_GUARD:e}"),
        });
    }
    let weights: Vec<f64> = sol.x[..n].iter().map(|q| (q / z).max(0.0)).collect();
    Ok(BoundSide {
        // losses lie in [0, 1], so only round-off can leave the interval
        value: sol.objective_value.clamp(0.0, 1.0),
        weights,
        z,
        status: sol.status,
    })
}

/// Upper and lower error bounds of `group`'s conditional error.
pub fn group_bounds(audit: &AuditSet, u: &UncertaintySet, group: usize) -> Result<GroupBound> {
    let upper = bound_side(audit, u, Some(group), Side::Upper)?;
    let lower = bound_side(audit, u, Some(group), Side::Lower)?;
    Ok(GroupBound::from_sides(Some(group), upper, lower, audit.group_size(group)))
}

/// Upper and lower bounds on the overall error; needs no group labels.
pub fn overall_bounds(audit: &AuditSet, u: &UncertaintySet) -> Result<GroupBound> {
    let upper = bound_side(audit, u, None, Side::Upper)?;
    let lower = bound_side(audit, u, None, Side::Lower)?;
    Ok(GroupBound::from_sides(None, upper, lower, audit.len()))
}

/// Where the band center τ and width λ of bound computations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSource {
    /// Moments of the whole training set (the training-time set).
    Training,
    /// Moments of the audit instances themselves, which keeps the
    /// empirical audit distribution inside the band.
    #[default]
    Audit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// Share of the training set used for auditing.
    pub audit_fraction: f64,
    pub seed: u64,
    pub tau_source: TauSource,
    /// Evaluate bounds with only this many frequencies of the model's map.
    pub reduced_frequencies: Option<usize>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            audit_fraction: 0.3,
            seed: 0,
            tau_source: TauSource::Audit,
            reduced_frequencies: None,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.audit_fraction > 0.0 && self.audit_fraction <= 1.0) {
            return invalid(format!("audit fraction must lie in (0, 1], got {}", self.audit_fraction));
        }
        if self.reduced_frequencies == Some(0) {
            return invalid("reduced frequency count must be positive");
        }
        Ok(())
    }
}

/// Sorted indices of an audit subset of `ds`, stratified by sensitive
/// group when groups are known. Every non-empty group keeps at least one
/// instance.
pub fn sample_audit(ds: &Dataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("audit fraction must lie in (0, 1], got {fraction}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..ds.len() {
        let key = ds.sensitive().map_or(0, |s| s[i]);
        strata.entry(key).or_default().push(i);
    }
    let mut picked = Vec::new();
    for (_, mut members) in strata {
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        picked.extend_from_slice(&members[..take]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// The uncertainty set used for auditing with `map` at confidence `lambda0`.
pub fn audit_uncertainty(
    train: &Dataset,
    audit: &AuditSet,
    map: &SpectralMap,
    lambda0: f64,
    source: TauSource,
) -> Result<UncertaintySet> {
    match source {
        TauSource::Training => build_uncertainty(map.apply_batch(train)?, lambda0),
        TauSource::Audit => build_uncertainty(audit.phi_matrix.clone(), lambda0),
    }
}

/// Bounds for every audit group plus the overall bound (last), each cell
/// independently; a failed cell carries its error.
pub fn bounds_for_all(audit: &AuditSet, u: &UncertaintySet) -> Vec<(Option<usize>, Result<GroupBound>)> {
    let mut out: Vec<(Option<usize>, Result<GroupBound>)> = audit
        .group_ids()
        .into_iter()
        .map(|g| (Some(g), group_bounds(audit, u, g)))
        .collect();
    out.push((None, overall_bounds(audit, u)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma,
    Lambda0,
}

/// One (grid value, group) cell of a bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    /// None for the overall bound.
    pub group: Option<usize>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Plain error of the rule on the audit members of the group.
    pub audit_error: Option<f64>,
    pub audit_size: usize,
    pub low_confidence: bool,
    /// Frequencies of the map the bounds were computed with.
    pub n_freq: Option<usize>,
    pub error: Option<String>,
}

/// Recomputes the bounds of the frozen `model` for each grid value of σ or
/// λ₀ (the other parameter stays at the model's value). Rows are ordered by
/// grid value, then group id, with the overall bound last.
pub fn bound_sweep(
    model: &MrcModel,
    train: &Dataset,
    audit_indices: &[usize],
    parameter: SweepParameter,
    values: &[f64],
    cfg: &BoundConfig,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return invalid("sweep grid is empty");
    }
    let base_map = match cfg.reduced_frequencies {
        Some(d) => model.map.with_frequencies(d)?,
        None => model.map.clone(),
    };
    let n_freq = match base_map.descriptor().kind {
        crate::spectral::MapKind::Fourier { n_freq, .. } => Some(n_freq),
        crate::spectral::MapKind::Polynomial { .. } => None,
    };
    let mut rows = Vec::new();
    for &value in values {
        let (map, lambda0) = match parameter {
            SweepParameter::Sigma => (base_map.with_sigma(value)?, model.lambda0),
            SweepParameter::Lambda0 => (base_map.clone(), value),
        };
        let cell = AuditSet::for_rule(model, &map, train, audit_indices)
            .and_then(|audit| audit_uncertainty(train, &audit, &map, lambda0, cfg.tau_source).map(|u| (audit, u)));
        let (audit, u) = match cell {
            Ok(c) => c,
            Err(e) => {
                rows.push(SweepRow {
                    parameter,
                    value,
                    group: None,
                    lower: None,
                    upper: None,
                    audit_error: None,
                    audit_size: audit_indices.len(),
                    low_confidence: false,
                    n_freq,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        for (group, result) in bounds_for_all(&audit, &u) {
            let audit_size = match group {
                Some(g) => audit.group_size(g),
                None => audit.len(),
            };
            let (lower, upper, error) = match result {
                Ok(b) => (Some(b.lower), Some(b.upper), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            rows.push(SweepRow {
                parameter,
                value,
                group,
                lower,
                upper,
                audit_error: audit.empirical_error(group),
                audit_size,
                low_confidence: group.is_some() && audit_size < MIN_GROUP_SIZE,
                n_freq,
                error,
            });
        }
    }
    Ok(rows)
}

/// How an extremal distribution reweights the audit instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub group: Option<usize>,
    pub side: Side,
    /// `pᵢ − 1/N` per audit instance.
    pub deltas: Vec<f64>,
    /// Extremal mass per group id (empty without group labels).
    pub group_marginals: Vec<f64>,
    /// Extremal mass per label.
    pub label_marginals: Vec<f64>,
}

pub fn extremal_report(bound: &GroupBound, side: Side, audit: &AuditSet, n_classes: usize) -> ExtremalReport {
    let p = bound.weights(side);
    let uniform = 1.0 / audit.len() as f64;
    let deltas = p.iter().map(|w| w - uniform).collect();
    let group_marginals = match &audit.groups {
        Some(groups) => {
            let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
            let mut m = vec![0.0; n_groups];
            for (w, &g) in p.iter().zip(groups) {
                m[g] += w;
            }
            m
        }
        None => Vec::new(),
    };
    let mut label_marginals = vec![0.0; n_classes];
    for (w, &y) in p.iter().zip(&audit.labels) {
        if y < n_classes {
            label_marginals[y] += w;
        }
    }
    ExtremalReport {
        group: bound.group,
        side,
        deltas,
        group_marginals,
        label_marginals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_audit(losses: Vec<f64>, groups: Vec<usize>) -> AuditSet {
        let phi = array![[1.0, 0.0], [0.8, 0.1], [0.2, 0.9], [0.0, 1.0], [0.5, 0.5], [0.3, 0.4]];
        let n = phi.nrows();
        AuditSet::new((0..n).collect(), phi, vec![0; n], losses, Some(groups)).unwrap()
    }

    fn band(audit: &AuditSet, lambda: f64) -> UncertaintySet {
        let mut u = build_uncertainty(audit.phi_matrix.clone(), 0.0).unwrap();
        u.lambda = vec![lambda; u.dim()];
        u
    }

    #[test]
    fn vacuous_band_reaches_extremes() {
        let audit = toy_audit(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 0, 0, 1, 1, 1]);
        let u = band(&audit, 10.0);
        let b = group_bounds(&audit, &u, 0).unwrap();
        assert_abs_diff_eq!(b.upper, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.lower, 0.0, epsilon = 1e-9);
        assert!(b.low_confidence);
    }

    #[test]
    fn zero_loss_rule_has_zero_bounds() {
        let audit = toy_audit(vec![0.0; 6], vec![0, 0, 1, 1, 1, 0]);
        let u = band(&audit, 0.05);
        let b = overall_bounds(&audit, &u).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn empirical_error_is_sandwiched() {
        let audit = toy_audit(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0], vec![0, 1, 0, 1, 0, 1]);
        for lambda in [0.0, 0.02, 0.2] {
            let u = band(&audit, lambda);
            for g in [0, 1] {
                let b = group_bounds(&audit, &u, g).unwrap();
                let emp = audit.empirical_error(Some(g)).unwrap();
                assert!(b.lower <= emp + 1e-9 && emp <= b.upper + 1e-9, "{b:?} {emp}");
            }
        }
    }

    #[test]
    fn extremal_weights_are_valid() {
        let audit = toy_audit(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0], vec![0, 0, 1, 1, 0, 1]);
        let u = band(&audit, 0.1);
        let b = group_bounds(&audit, &u, 1).unwrap();
        for side in [Side::Upper, Side::Lower] {
            let p = b.weights(side);
            assert!(p.iter().all(|&w| w >= 0.0));
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(u.band_violation(&audit.phi_matrix, p) < 1e-9);
            let mass: f64 = (0..6).filter(|&i| audit.groups.as_ref().unwrap()[i] == 1).map(|i| p[i]).sum();
            let err: f64 = (0..6)
                .filter(|&i| audit.groups.as_ref().unwrap()[i] == 1)
                .map(|i| p[i] * audit.losses[i])
                .sum();
            assert_abs_diff_eq!(err / mass, b.value(side), epsilon = 1e-9);
        }
        let report = extremal_report(&b, Side::Upper, &audit, 1);
        assert_abs_diff_eq!(report.deltas.iter().sum::<f64>(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(report.group_marginals.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn uniform_weights_give_zero_deltas() {
        let audit = toy_audit(vec![0.0; 6], vec![0; 6]);
        let bound = GroupBound {
            group: None,
            lower: 0.0,
            upper: 0.0,
            extremal_upper_weights: vec![1.0 / 6.0; 6],
            extremal_lower_weights: vec![1.0 / 6.0; 6],
            upper_status: LpStatus::Optimal,
            lower_status: LpStatus::Optimal,
            audit_size: 6,
            low_confidence: false,
        };
        let r = extremal_report(&bound, Side::Lower, &audit, 2);
        assert!(r.deltas.iter().all(|d| d.abs() < 1e-15));
        assert_abs_diff_eq!(r.label_marginals[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn group_bounds_need_groups() {
        let phi = array![[1.0], [0.0]];
        let audit = AuditSet::new(vec![0, 1], phi, vec![0, 1], vec![0.0, 1.0], None).unwrap();
        let u = build_uncertainty(audit.phi_matrix.clone(), 1.0).unwrap();
        assert!(group_bounds(&audit, &u, 0).is_err());
        assert!(overall_bounds(&audit, &u).is_ok());
    }

    #[test]
    fn losses_outside_unit_interval_rejected() {
        let phi = array![[1.0], [0.0]];
        assert!(AuditSet::new(vec![0, 1], phi, vec![0, 1], vec![0.0, 2.0], None).is_err());
    }

    #[test]
    fn audit_sampling_is_stratified_and_reproducible() {
        let ds = crate::dataset::generate_toy(400, 3).unwrap();
        let a = sample_audit(&ds, 0.3, 9).unwrap();
        assert_eq!(a, sample_audit(&ds, 0.3, 9).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let s = ds.sensitive().unwrap();
        for g in 0..2 {
            let total = s.iter().filter(|&&v| v == g).count() as f64;
            let picked = a.iter().filter(|&&i| s[i] == g).count() as f64;
            assert!((picked - 0.3 * total).abs() <= 1.0);
        }
    }
}
