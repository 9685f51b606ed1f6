//! Screening mathematics.
//!
//! A feature group `g` can be discarded once the dual certificate is known
//! to lie in a region `{Z : Ω_g^D(Z − c) ≤ r_g}` with `1 − Ω_g^D(c) > r_g`.
//! The center `c` is a (possibly infeasible) certificate estimate
//! `−(1/λ) Σ η_s θ_s x_s` and the radius is driven by a duality gap:
//!
//! ```text
//! r_g = sqrt(2 L N_g R) / λ,   N_g = Σ η_s Ω_g^D(x_s)²,
//! R   = Gap + (Σ η_s f_{y_s}(0)) · (Ω^D(c) − 1)_+
//! ```
//!
//! The finite-sum rule evaluates everything exactly with `η_i = 1/m`. The
//! online rule keeps exponentially reweighted running sums over the sampled
//! points, with `μ_t = 1/t^w` and `η_s^(t) = μ_s Π_{i>s} (1 − μ_i)`, and
//! splits the history into segments so the primal value can be evaluated
//! at an anchor point that is refreshed after every segment.
//!
//! All certificate vectors carry the `−1/λ` factor.

use crate::dataio::{Dataset, SparseRow};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::regularizers::GroupRegularizer;
use crate::solvers::Pruning;

/// `μ_t = 1 / t^w` on a global iteration counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRule {
    exponent: f64,
}

impl WeightRule {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight exponent w must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `μ_t` for `t >= 1`; `μ_1 = 1`.
    pub fn mu(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        (t as f64).powf(-self.exponent)
    }
}

impl Default for WeightRule {
    fn default() -> Self {
        Self { exponent: 0.51 }
    }
}

/// `η_s^(t) = μ_s Π_{i=s+1}^t (1 − μ_i)` for `s = 1..=t`, with `t = mu.len()`.
pub fn eta_weights(mu: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; mu.len()];
    let mut tail = 1.0;
    for s in (0..mu.len()).rev() {
        eta[s] = mu[s] * tail;
        tail *= 1.0 - mu[s];
    }
    eta
}

/// Region `{Z : Ω_g^D(Z − center) ≤ radii[g] for every group}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeRegion {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

impl SafeRegion {
    /// A region that screens nothing.
    pub fn vacuous(center: Vec<f64>, n_groups: usize) -> Self {
        Self {
            center,
            radii: vec![f64::INFINITY; n_groups],
        }
    }
}

/// Groups `g` with `1 − Ω_g^D(c_g) > r_g`.
pub fn screen_groups(region: &SafeRegion, reg: &GroupRegularizer) -> Vec<usize> {
    (0..reg.n_groups())
        .filter(|&g| 1.0 - reg.group_dual(g, &region.center) > region.radii[g])
        .collect()
}

/// `sqrt(2 L N_g R) / λ`, with `R` floored at zero.
pub fn finite_radius(gap_plus: f64, n_g: f64, lipschitz: f64, lambda: f64) -> f64 {
    (2.0 * lipschitz * n_g * gap_plus.max(0.0)).sqrt() / lambda
}

/// Weighted duality gap `P_η(β) − D_η(θ)`:
/// `Σ η_i f(x_i^T β) + λ Ω(β) + Σ η_i f*(θ_i)`.
///
/// No feasibility scaling is applied to `thetas`. An out-of-domain
/// conjugate yields `+∞`.
#[allow(clippy::too_many_arguments)]
pub fn finite_gap(
    beta: &[f64],
    thetas: &[f64],
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    eta: &[f64],
) -> Result<f64> {
    let m = data.m();
    if thetas.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: thetas.len(),
        });
    }
    if eta.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: eta.len(),
        });
    }
    loss.validate_labels(data.labels())?;
    let mut primal = lambda * reg.omega(beta);
    let mut conj = 0.0;
    for i in 0..m {
        let y = data.label(i);
        primal += eta[i] * loss.f(data.row(i).dot(beta), y);
        conj += eta[i] * loss.conjugate(thetas[i], y);
    }
    Ok(primal + conj)
}

/// Uniform-weight gap at `β` with the dual point `θ_i = f'(x_i^T β)` scaled
/// into the feasible set `{θ : Ω^D((1/m) Σ θ_i x_i) ≤ λ}`.
pub fn scaled_finite_gap(
    beta: &[f64],
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
) -> f64 {
    let m = data.m();
    let margins = data.margins(beta);
    let mut thetas: Vec<f64> = margins
        .iter()
        .zip(data.labels())
        .map(|(&z, &y)| loss.d(z, y))
        .collect();
    let dual_norm = reg.omega_dual(&data.weighted_mean_row(&thetas));
    if dual_norm > lambda {
        let a = lambda / dual_norm;
        thetas.iter_mut().for_each(|t| *t *= a);
    }
    let inv_m = 1.0 / m as f64;
    let mut total = lambda * reg.omega(beta);
    for i in 0..m {
        let y = data.label(i);
        total += inv_m * (loss.f(margins[i], y) + loss.conjugate(thetas[i], y));
    }
    total
}

/// Finite-sum screening region plus the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteScreen {
    pub region: SafeRegion,
    /// `P(β̄) − D(θ̄)` with the unscaled `θ̄`.
    pub gap: f64,
    /// Gap plus the infeasibility penalty, before clamping at zero.
    pub residual: f64,
}

/// Build the finite-sum safe region from a full pass at the anchor `β̄`.
pub fn build_finite_screen(
    anchor: &[f64],
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
) -> Result<FiniteScreen> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if anchor.len() != data.n() || reg.dim() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: anchor.len(),
        });
    }
    loss.validate_labels(data.labels())?;
    let m = data.m();
    let inv_m = 1.0 / m as f64;

    let mut thetas = Vec::with_capacity(m);
    let mut primal = 0.0;
    let mut conj = 0.0;
    let mut zero_loss = 0.0;
    let mut group_norms = vec![0.0; reg.n_groups()];
    let mut duals = Vec::new();
    for (row, &y) in data.rows().iter().zip(data.labels()) {
        let z = row.dot(anchor);
        let theta = loss.d(z, y);
        thetas.push(theta);
        primal += loss.f(z, y);
        conj += loss.conjugate(theta, y);
        zero_loss += loss.f(0.0, y);
        reg.row_group_duals(row, &mut duals);
        for &(g, v) in &duals {
            group_norms[g] += v * v;
        }
    }
    let mut center = data.weighted_mean_row(&thetas);
    center.iter_mut().for_each(|c| *c *= -1.0 / lambda);

    let gap = (primal + conj) * inv_m + lambda * reg.omega(anchor);
    let infeasibility = (reg.omega_dual(&center) - 1.0).max(0.0);
    let residual = gap + zero_loss * inv_m * infeasibility;
    let radii = if residual.is_finite() {
        group_norms
            .iter()
            .map(|&n_g| finite_radius(residual, n_g * inv_m, loss.lipschitz(), lambda))
            .collect()
    } else {
        vec![f64::INFINITY; reg.n_groups()]
    };
    Ok(FiniteScreen {
        region: SafeRegion { center, radii },
        gap,
        residual,
    })
}

/// What a segment close produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentClose {
    pub region: SafeRegion,
    /// Online primal minus dual value, `p − d`.
    pub gap: f64,
    /// `R = p − d + S` before clamping.
    pub residual_raw: f64,
    /// `max(R, 0)`, the value fed to the radii.
    pub residual: f64,
    /// False when a non-finite conjugate was met during the segment; the
    /// region is then vacuous.
    pub valid: bool,
}

/// Running sums of the online screening rule.
///
/// Vectors live in the current compact (active) coordinates; see
/// [`ScreenState::restrict`].
#[derive(Debug, Clone)]
pub struct ScreenState {
    /// `X`: certificate accumulated over the current segment.
    segment_cert: Vec<f64>,
    /// `Z`: certificate over the whole history.
    cert: Vec<f64>,
    /// `p`: online primal value at the segment anchors.
    primal: f64,
    /// `d`: online dual value.
    dual: f64,
    /// `v`: segment-weighted `f(0)`.
    zero_loss: f64,
    /// `u`: product of `(1 − μ)` over the current segment.
    shrink: f64,
    /// `S`: accumulated infeasibility penalty.
    penalty: f64,
    /// `N_g`.
    group_norms: Vec<f64>,
    k_global: u64,
    segment_index: usize,
    steps_in_segment: usize,
    invalid: bool,
    anchor: Vec<f64>,
    anchor_omega: f64,
    duals: Vec<(usize, f64)>,
}

impl ScreenState {
    /// Zero state over `reg`'s coordinates with a zero anchor.
    pub fn new(reg: &GroupRegularizer) -> Self {
        let n = reg.dim();
        Self {
            segment_cert: vec![0.0; n],
            cert: vec![0.0; n],
            primal: 0.0,
            dual: 0.0,
            zero_loss: 0.0,
            shrink: 0.0,
            penalty: 0.0,
            group_norms: vec![0.0; reg.n_groups()],
            k_global: 0,
            segment_index: 0,
            steps_in_segment: 0,
            invalid: false,
            anchor: vec![0.0; n],
            anchor_omega: 0.0,
            duals: Vec::new(),
        }
    }

    pub fn segment_cert(&self) -> &[f64] {
        &self.segment_cert
    }

    pub fn cert(&self) -> &[f64] {
        &self.cert
    }

    pub fn primal(&self) -> f64 {
        self.primal
    }

    pub fn dual(&self) -> f64 {
        self.dual
    }

    pub fn zero_loss(&self) -> f64 {
        self.zero_loss
    }

    pub fn shrink(&self) -> f64 {
        self.shrink
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn group_norms(&self) -> &[f64] {
        &self.group_norms
    }

    pub fn k_global(&self) -> u64 {
        self.k_global
    }

    pub fn segment_index(&self) -> usize {
        self.segment_index
    }

    pub fn steps_in_segment(&self) -> usize {
        self.steps_in_segment
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn set_anchor(&mut self, beta: &[f64], reg: &GroupRegularizer) {
        self.anchor.clear();
        self.anchor.extend_from_slice(beta);
        self.anchor_omega = reg.omega(beta);
    }

    /// Advance every running sum by one sample.
    ///
    /// `theta` must be `f'_y(x^T β)` at the current iterate; the primal term
    /// is evaluated at the anchor.
    #[allow(clippy::too_many_arguments)]
    pub fn online_inner_update(
        &mut self,
        x: &SparseRow,
        y: f64,
        theta: f64,
        loss: &LossModel,
        reg: &GroupRegularizer,
        lambda: f64,
        rule: &WeightRule,
    ) -> Result<()> {
        if x.dim() != self.cert.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cert.len(),
                got: x.dim(),
            });
        }
        let conj = loss.conjugate(theta, y);
        if !conj.is_finite() {
            self.invalid = true;
            return Ok(());
        }
        self.k_global += 1;
        self.steps_in_segment += 1;
        let mu = rule.mu(self.k_global);
        let keep = 1.0 - mu;

        self.segment_cert.iter_mut().for_each(|v| *v *= keep);
        x.axpy(-mu * theta / lambda, &mut self.segment_cert);

        let anchor_value = loss.f(x.dot(&self.anchor), y) + lambda * self.anchor_omega;
        self.primal = mu * anchor_value + keep * self.primal;
        self.dual = -mu * conj + keep * self.dual;

        self.group_norms.iter_mut().for_each(|v| *v *= keep);
        reg.row_group_duals(x, &mut self.duals);
        for &(g, d) in &self.duals {
            self.group_norms[g] += mu * d * d;
        }

        self.zero_loss = mu * loss.f(0.0, y) + keep * self.zero_loss;
        self.shrink *= keep;
        Ok(())
    }

    /// Fold the segment into the global certificate and build the region.
    ///
    /// Resets the segment accumulators; the anchor is left to the caller.
    pub fn online_segment_close(
        &mut self,
        reg: &GroupRegularizer,
        lipschitz: f64,
        lambda: f64,
    ) -> Result<SegmentClose> {
        if self.steps_in_segment == 0 && !self.invalid {
            return Err(Error::InvalidParameter(
                "segment closed without any update".into(),
            ));
        }
        let u = self.shrink;
        for (z, x) in self.cert.iter_mut().zip(&self.segment_cert) {
            *z = u * *z + x;
        }
        let gap = self.primal - self.dual;
        let norm = if u < 1.0 { 1.0 - u } else { 1.0 };
        let y_dual = reg.omega_dual(&self.segment_cert) / norm;
        self.penalty = u * self.penalty + self.zero_loss * (y_dual - 1.0).max(0.0);

        let close = if self.invalid {
            SegmentClose {
                region: SafeRegion::vacuous(self.cert.clone(), reg.n_groups()),
                gap,
                residual_raw: f64::INFINITY,
                residual: f64::INFINITY,
                valid: false,
            }
        } else {
            let residual_raw = gap + self.penalty;
            let residual = residual_raw.max(0.0);
            let radii = self
                .group_norms
                .iter()
                .map(|&n_g| finite_radius(residual, n_g, lipschitz, lambda))
                .collect();
            SegmentClose {
                region: SafeRegion {
                    center: self.cert.clone(),
                    radii,
                },
                gap,
                residual_raw,
                residual,
                valid: true,
            }
        };

        self.segment_cert.iter_mut().for_each(|v| *v = 0.0);
        self.zero_loss = 0.0;
        self.shrink = 1.0;
        self.steps_in_segment = 0;
        self.invalid = false;
        self.segment_index += 1;
        Ok(close)
    }

    /// Carry the state over to the coordinates left after a prune.
    pub fn restrict(&mut self, pruning: &Pruning) {
        let pick = |v: &[f64]| {
            pruning
                .old_position
                .iter()
                .map(|&k| v[k])
                .collect::<Vec<_>>()
        };
        self.segment_cert = pick(&self.segment_cert);
        self.cert = pick(&self.cert);
        self.anchor = pick(&self.anchor);
        self.group_norms = pruning
            .kept_groups
            .iter()
            .map(|&g| self.group_norms[g])
            .collect();
        self.anchor_omega = pruning.reg.omega(&self.anchor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::regularizers::GroupStructure;

    #[test]
    fn harmonic_weights_are_uniform() {
        let mu: Vec<f64> = (1..=7).map(|s| 1.0 / s as f64).collect();
        for e in eta_weights(&mu) {
            assert!((e - 1.0 / 7.0).abs() < 1e-15);
        }
        assert_eq!(eta_weights(&[1.0]), vec![1.0]);
    }

    #[test]
    fn weight_rule_bounds() {
        assert!(WeightRule::new(0.5).is_err());
        assert!(WeightRule::new(1.01).is_err());
        let w = WeightRule::new(0.51).unwrap();
        assert_eq!(w.mu(1), 1.0);
        assert!(w.mu(2) < 1.0 && w.mu(2) > 0.0);
    }

    #[test]
    fn screen_rule_cases() {
        let reg = GroupRegularizer::l1(3);
        let r = SafeRegion {
            center: vec![0.0; 3],
            radii: vec![0.5; 3],
        };
        assert_eq!(screen_groups(&r, &reg), vec![0, 1, 2]);
        let r = SafeRegion {
            center: vec![0.0; 3],
            radii: vec![1e6; 3],
        };
        assert!(screen_groups(&r, &reg).is_empty());
        let r = SafeRegion {
            center: vec![0.95, 0.2, 0.99],
            radii: vec![0.1; 3],
        };
        assert_eq!(screen_groups(&r, &reg), vec![1]);
        // strict inequality at the boundary
        let r = SafeRegion {
            center: vec![0.5],
            radii: vec![0.5],
        };
        assert!(screen_groups(&r, &GroupRegularizer::l1(1)).is_empty());
    }

    #[test]
    fn radius_arithmetic() {
        assert_eq!(finite_radius(0.0, 3.0, 1.0, 0.5), 0.0);
        assert_eq!(finite_radius(2.0, 1.0, 1.0, 1.0), 2.0);
        assert_eq!(finite_radius(-1e-14, 1.0, 1.0, 1.0), 0.0);
        let (g, n, l, lam) = (0.37, 2.5, 0.25, 0.8);
        assert!((finite_radius(g, n, l, lam) - (2.0 * l * n * g).sqrt() / lam).abs() < 1e-15);
    }

    fn tiny() -> Dataset {
        Dataset::new(
            vec![
                SparseRow::from_dense(&[1.0, 0.0, 2.0]),
                SparseRow::from_dense(&[0.0, -1.0, 0.5]),
            ],
            vec![1.0, -2.0],
            3,
        )
        .unwrap()
    }

    #[test]
    fn gap_at_origin() {
        let data = tiny();
        let loss = LossModel::new(LossKind::Squared);
        let reg = GroupRegularizer::l1(3);
        let eta = [0.5, 0.5];
        let g = finite_gap(&[0.0; 3], &[0.0; 2], &data, &loss, &reg, 0.3, &eta).unwrap();
        let expected: f64 = data.labels().iter().map(|y| 0.5 * 0.5 * y * y).sum::<f64>()
            + data
                .labels()
                .iter()
                .map(|&y| 0.5 * loss.conjugate(0.0, y))
                .sum::<f64>();
        assert!((g - expected).abs() < 1e-15);
        assert!(finite_gap(&[0.0; 3], &[0.0], &data, &loss, &reg, 0.3, &eta).is_err());
    }

    #[test]
    fn gap_infinite_out_of_domain() {
        let data = Dataset::new(vec![SparseRow::from_dense(&[1.0])], vec![1.0], 1).unwrap();
        let loss = LossModel::new(LossKind::Logistic);
        let reg = GroupRegularizer::l1(1);
        let g = finite_gap(&[0.0], &[0.5], &data, &loss, &reg, 0.1, &[1.0]).unwrap();
        assert_eq!(g, f64::INFINITY);
    }

    #[test]
    fn first_inner_update_overwrites() {
        let reg = GroupRegularizer::l1(3);
        let loss = LossModel::new(LossKind::Squared);
        let rule = WeightRule::default();
        let lambda = 0.4;
        let mut st = ScreenState::new(&reg);
        let anchor = [0.1, -0.2, 0.3];
        st.set_anchor(&anchor, &reg);
        let x = SparseRow::from_dense(&[1.0, 2.0, 0.0]);
        let y = 0.5;
        let theta = 0.7;
        st.online_inner_update(&x, y, theta, &loss, &reg, lambda, &rule)
            .unwrap();
        let xd = x.to_dense();
        for (c, xj) in st.segment_cert().iter().zip(&xd) {
            assert!((c + theta * xj / lambda).abs() < 1e-15);
        }
        let p = loss.f(x.dot(&anchor), y) + lambda * reg.omega(&anchor);
        assert!((st.primal() - p).abs() < 1e-15);
        assert_eq!(st.dual(), -loss.conjugate(theta, y));
        assert_eq!(st.shrink(), 0.0);
        assert_eq!(st.group_norms(), &[1.0, 4.0, 0.0]);
    }

    #[test]
    fn zero_theta_only_shrinks() {
        let reg = GroupRegularizer::l1(2);
        let loss = LossModel::new(LossKind::Squared);
        let rule = WeightRule::new(1.0).unwrap();
        let mut st = ScreenState::new(&reg);
        let x = SparseRow::from_dense(&[1.0, -1.0]);
        st.online_inner_update(&x, 1.0, 0.6, &loss, &reg, 1.0, &rule)
            .unwrap();
        let before = (st.segment_cert().to_vec(), st.dual());
        st.online_inner_update(&x, 1.0, 0.0, &loss, &reg, 1.0, &rule)
            .unwrap();
        // mu_2 = 1/2
        for (a, b) in st.segment_cert().iter().zip(&before.0) {
            assert_eq!(*a, 0.5 * b);
        }
        assert_eq!(st.dual(), 0.5 * before.1);
    }

    #[test]
    fn degenerate_zero_data_segment() {
        // all-zero samples, f ≡ 0 at the label: N_g = 0 so radii vanish
        let reg = GroupRegularizer::group_l12(GroupStructure::from_sizes(&[2, 1]).unwrap());
        let loss = LossModel::new(LossKind::Squared);
        let rule = WeightRule::default();
        let mut st = ScreenState::new(&reg);
        let x = SparseRow::from_dense(&[0.0, 0.0, 0.0]);
        for _ in 0..5 {
            st.online_inner_update(&x, 0.0, 0.0, &loss, &reg, 1.0, &rule)
                .unwrap();
        }
        let c = st.online_segment_close(&reg, 1.0, 1.0).unwrap();
        assert!(c.region.radii.iter().all(|&r| r == 0.0));
        assert_eq!(screen_groups(&c.region, &reg), vec![0, 1]);
    }

    #[test]
    fn close_requires_updates() {
        let reg = GroupRegularizer::l1(2);
        let mut st = ScreenState::new(&reg);
        assert!(st.online_segment_close(&reg, 1.0, 1.0).is_err());
    }

    #[test]
    fn infinite_conjugate_invalidates_segment() {
        let reg = GroupRegularizer::l1(1);
        let loss = LossModel::new(LossKind::Logistic);
        let rule = WeightRule::default();
        let mut st = ScreenState::new(&reg);
        let x = SparseRow::from_dense(&[1.0]);
        st.online_inner_update(&x, 1.0, -0.3, &loss, &reg, 1.0, &rule)
            .unwrap();
        st.online_inner_update(&x, 1.0, 0.3, &loss, &reg, 1.0, &rule)
            .unwrap();
        let c = st.online_segment_close(&reg, 0.25, 1.0).unwrap();
        assert!(!c.valid);
        assert!(screen_groups(&c.region, &reg).is_empty());
        // next segment is clean again
        st.online_inner_update(&x, 1.0, -0.3, &loss, &reg, 1.0, &rule)
            .unwrap();
        assert!(st.online_segment_close(&reg, 0.25, 1.0).unwrap().valid);
    }

    #[test]
    fn negative_rounding_residual_is_clamped() {
        let reg = GroupRegularizer::l1(1);
        let mut st = ScreenState::new(&reg);
        st.steps_in_segment = 1;
        st.shrink = 0.0;
        st.primal = 1.0;
        st.dual = 1.0 + 1e-14;
        st.group_norms = vec![1.0];
        let c = st.online_segment_close(&reg, 1.0, 1.0).unwrap();
        assert!(c.residual_raw < 0.0);
        assert_eq!(c.residual, 0.0);
        assert_eq!(c.region.radii, vec![0.0]);
    }
}
