//! Update operators (Prox-SGD, subgradient SGD), step-size schedules, the
//! active-set model, and two deterministic-quality reference solvers
//! (proximal gradient descent and SAGA).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Dataset, SampleStream, SparseRow};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::regularizers::GroupRegularizer;
use crate::screening::scaled_finite_gap;

/// Power-law step sizes `γ_t = c / t^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    scale: f64,
    exponent: f64,
}

impl StepSchedule {
    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step scale must be positive, got {scale}"
            )));
        }
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step exponent must lie in (0, 1], got {exponent}"
            )));
        }
        Ok(Self { scale, exponent })
    }

    /// `γ_t = 1 / (m L t^0.51)`.
    pub fn default_for(m: usize, lipschitz: f64) -> Self {
        Self {
            scale: 1.0 / (m.max(1) as f64 * lipschitz),
            exponent: 0.51,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Step at iteration `t >= 1`.
    pub fn step_size(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        self.scale / (t as f64).powf(self.exponent)
    }
}

/// Coefficients over the surviving feature groups.
///
/// Positions are laid out group by group; `active_map[k]` is the original
/// feature id of position `k`. Features outside the map are zero for good.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveModel {
    pub beta: Vec<f64>,
    active_map: Vec<usize>,
    active_groups: Vec<usize>,
    n: usize,
}

/// Result of [`ActiveModel::prune`]: how to carry data and state over to
/// the smaller coordinate system.
#[derive(Debug, Clone)]
pub struct Pruning {
    /// Regularizer over the kept groups, compact coordinates.
    pub reg: GroupRegularizer,
    /// Old (pre-prune) group index of every kept group.
    pub kept_groups: Vec<usize>,
    /// Old position of every new position.
    pub old_position: Vec<usize>,
    /// New position of every old position, if kept.
    pub position_map: Vec<Option<usize>>,
}

impl ActiveModel {
    /// All-zero model over every feature of `reg`.
    pub fn zeros(reg: &GroupRegularizer) -> Self {
        let n = reg.dim();
        Self {
            beta: vec![0.0; n],
            active_map: (0..n).collect(),
            active_groups: (0..reg.n_groups()).collect(),
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Dimension of the original feature space.
    pub fn full_dim(&self) -> usize {
        self.n
    }

    pub fn active_map(&self) -> &[usize] {
        &self.active_map
    }

    /// Original group ids still active, in compact-group order.
    pub fn active_groups(&self) -> &[usize] {
        &self.active_groups
    }

    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    /// Coefficients in original coordinates, exact zeros off the active set.
    pub fn to_full(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&j, &b) in self.active_map.iter().zip(&self.beta) {
            out[j] = b;
        }
        out
    }

    /// Drop the compact groups in `eliminate` for good.
    ///
    /// `reg` is the current compact regularizer. Kept groups retain their
    /// relative order.
    pub fn prune(&mut self, reg: &GroupRegularizer, eliminate: &[usize]) -> Pruning {
        let mut drop = vec![false; reg.n_groups()];
        for &g in eliminate {
            drop[g] = true;
        }
        let kept_groups: Vec<usize> = (0..reg.n_groups()).filter(|&g| !drop[g]).collect();
        let (new_reg, old_position) = reg.restrict(&kept_groups);
        let mut position_map = vec![None; self.dim()];
        for (new, &old) in old_position.iter().enumerate() {
            position_map[old] = Some(new);
        }
        self.beta = old_position.iter().map(|&k| self.beta[k]).collect();
        self.active_map = old_position.iter().map(|&k| self.active_map[k]).collect();
        self.active_groups = kept_groups.iter().map(|&g| self.active_groups[g]).collect();
        Pruning {
            reg: new_reg,
            kept_groups,
            old_position,
            position_map,
        }
    }
}

fn check_dims(model: &ActiveModel, x: &SparseRow, reg: &GroupRegularizer) -> Result<()> {
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.dim(),
        });
    }
    if reg.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: reg.dim(),
        });
    }
    Ok(())
}

fn check_step(gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be > 0, got {gamma}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// `β ← prox_{λγΩ}(β − γ θ x)`, with `x` in active coordinates.
pub fn proxsgd_step(
    model: &mut ActiveModel,
    theta: f64,
    x: &SparseRow,
    gamma: f64,
    lambda: f64,
    reg: &GroupRegularizer,
) -> Result<()> {
    check_dims(model, x, reg)?;
    check_step(gamma, lambda)?;
    x.axpy(-gamma * theta, &mut model.beta);
    reg.prox_in_place(&mut model.beta, lambda * gamma);
    Ok(())
}

/// `β ← β − γ(θ x + λ Z)` with `Z` the minimal-norm subgradient of `Ω` at `β`.
pub fn sgd_step(
    model: &mut ActiveModel,
    theta: f64,
    x: &SparseRow,
    gamma: f64,
    lambda: f64,
    reg: &GroupRegularizer,
) -> Result<()> {
    check_dims(model, x, reg)?;
    check_step(gamma, lambda)?;
    let z = reg.subgradient(&model.beta);
    x.axpy(-gamma * theta, &mut model.beta);
    if lambda != 0.0 {
        for (b, zj) in model.beta.iter_mut().zip(&z) {
            *b -= gamma * lambda * zj;
        }
    }
    Ok(())
}

/// Finite-sum objective `(1/m) Σ f(x_i^T β; y_i) + λ Ω(β)`.
pub fn objective(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    beta: &[f64],
) -> f64 {
    let m = data.m().max(1) as f64;
    let fit: f64 = data
        .rows()
        .iter()
        .zip(data.labels())
        .map(|(r, &y)| loss.f(r.dot(beta), y))
        .sum();
    fit / m + lambda * reg.omega(beta)
}

/// `(1/m) Σ f'(x_i^T β) x_i`.
pub fn full_gradient(data: &Dataset, loss: &LossModel, beta: &[f64]) -> Vec<f64> {
    let thetas: Vec<f64> = data
        .rows()
        .iter()
        .zip(data.labels())
        .map(|(r, &y)| loss.d(r.dot(beta), y))
        .collect();
    data.weighted_mean_row(&thetas)
}

/// Largest squared singular value of the data matrix, by power iteration.
pub fn spectral_norm_sq(data: &Dataset) -> f64 {
    let n = data.n();
    if n == 0 || data.is_empty() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut est = 0.0;
    for _ in 0..1000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut w = vec![0.0; n];
        for r in data.rows() {
            r.axpy(r.dot(&v), &mut w);
        }
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = w;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Termination settings shared by the reference solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Full passes over the data before giving up.
    pub max_epochs: usize,
    pub seed: u64,
}

impl SolveOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_epochs: 1_000_000,
            seed: 0,
        }
    }
}

fn check_solve_inputs(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    tol: f64,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if reg.dim() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: reg.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    loss.validate_labels(data.labels())
}

/// Fixed-step proximal gradient descent on the finite-sum objective.
pub struct Pgd<'a> {
    data: &'a Dataset,
    loss: &'a LossModel,
    reg: &'a GroupRegularizer,
    lambda: f64,
    step: f64,
    beta: Vec<f64>,
}

impl<'a> Pgd<'a> {
    pub fn new(
        data: &'a Dataset,
        loss: &'a LossModel,
        reg: &'a GroupRegularizer,
        lambda: f64,
    ) -> Self {
        let l_full = loss.lipschitz() / data.m().max(1) as f64 * spectral_norm_sq(data);
        let step = if l_full > 0.0 { 1.0 / l_full } else { 1.0 };
        Self {
            data,
            loss,
            reg,
            lambda,
            step,
            beta: vec![0.0; data.n()],
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn objective(&self) -> f64 {
        objective(self.data, self.loss, self.reg, self.lambda, &self.beta)
    }

    pub fn gap(&self) -> f64 {
        scaled_finite_gap(&self.beta, self.data, self.loss, self.reg, self.lambda)
    }

    pub fn step(&mut self) {
        let grad = full_gradient(self.data, self.loss, &self.beta);
        for (b, g) in self.beta.iter_mut().zip(&grad) {
            *b -= self.step * g;
        }
        self.reg
            .prox_in_place(&mut self.beta, self.lambda * self.step);
    }
}

/// Proximal gradient descent until the duality gap is at most `tol`.
pub fn pgd_solve(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    pgd_solve_with(data, loss, reg, lambda, &SolveOptions::new(tol))
}

pub fn pgd_solve_with(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    check_solve_inputs(data, loss, reg, lambda, opts.tol)?;
    let mut pgd = Pgd::new(data, loss, reg, lambda);
    let mut gap = pgd.gap();
    let mut epoch = 0;
    while gap > opts.tol {
        if epoch >= opts.max_epochs {
            return Err(Error::NotConverged {
                tol: opts.tol,
                epochs: epoch,
                gap,
            });
        }
        for _ in 0..10 {
            pgd.step();
        }
        epoch += 10;
        gap = pgd.gap();
    }
    Ok(pgd.beta)
}

/// Proximal SAGA with one stored derivative scalar per sample.
pub struct Saga<'a> {
    data: &'a Dataset,
    loss: &'a LossModel,
    reg: &'a GroupRegularizer,
    lambda: f64,
    step: f64,
    beta: Vec<f64>,
    table: Vec<f64>,
    avg: Vec<f64>,
    sampler: SampleStream,
    scratch: Vec<f64>,
}

impl<'a> Saga<'a> {
    pub fn new(
        data: &'a Dataset,
        loss: &'a LossModel,
        reg: &'a GroupRegularizer,
        lambda: f64,
        seed: u64,
    ) -> Self {
        let max_row_sq = data
            .rows()
            .iter()
            .map(|r| r.values().iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        let l_row = loss.lipschitz() * max_row_sq;
        let step = if l_row > 0.0 {
            1.0 / (3.0 * l_row)
        } else {
            1.0
        };
        let beta = vec![0.0; data.n()];
        let table: Vec<f64> = data.labels().iter().map(|&y| loss.d(0.0, y)).collect();
        let avg = data.weighted_mean_row(&table);
        Self {
            data,
            loss,
            reg,
            lambda,
            step,
            beta,
            table,
            avg,
            sampler: SampleStream::for_dataset(data, seed),
            scratch: vec![0.0; data.n()],
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn into_beta(self) -> Vec<f64> {
        self.beta
    }

    /// Stored `f'(x_i^T β)` values, one per sample.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// One stochastic update; returns the sample index it touched.
    pub fn step(&mut self) -> Result<usize> {
        let i = self.sampler.next_index()?;
        let row = self.data.row(i);
        let y = self.data.label(i);
        let fresh = self.loss.d(row.dot(&self.beta), y);
        let delta = fresh - self.table[i];
        self.scratch.copy_from_slice(&self.beta);
        for (s, a) in self.scratch.iter_mut().zip(&self.avg) {
            *s -= self.step * a;
        }
        row.axpy(-self.step * delta, &mut self.scratch);
        self.reg
            .prox_in_place(&mut self.scratch, self.lambda * self.step);
        std::mem::swap(&mut self.beta, &mut self.scratch);
        row.axpy(delta / self.data.m() as f64, &mut self.avg);
        self.table[i] = fresh;
        Ok(i)
    }

    /// Recompute the running average from the table (limits drift).
    pub fn refresh_average(&mut self) {
        self.avg = self.data.weighted_mean_row(&self.table);
    }

    pub fn gap(&self) -> f64 {
        scaled_finite_gap(&self.beta, self.data, self.loss, self.reg, self.lambda)
    }
}

/// SAGA until the duality gap is at most `tol`.
pub fn saga_solve(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    saga_solve_with(data, loss, reg, lambda, &SolveOptions::new(tol))
}

pub fn saga_solve_with(
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    check_solve_inputs(data, loss, reg, lambda, opts.tol)?;
    let mut saga = Saga::new(data, loss, reg, lambda, opts.seed);
    let mut gap = saga.gap();
    let mut epoch = 0;
    while gap > opts.tol {
        if epoch >= opts.max_epochs {
            return Err(Error::NotConverged {
                tol: opts.tol,
                epochs: epoch,
                gap,
            });
        }
        for _ in 0..data.m() {
            saga.step()?;
        }
        saga.refresh_average();
        epoch += 1;
        gap = saga.gap();
    }
    Ok(saga.into_beta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::oracle;

    #[test]
    fn step_sizes() {
        let s = StepSchedule::power(1.0, 0.51).unwrap();
        assert_eq!(s.step_size(1), 1.0);
        let s = StepSchedule::default_for(62, 1.0);
        assert!((s.step_size(1) - 1.0 / 62.0).abs() < 1e-18);
        let s = StepSchedule::power(3.0, 0.5).unwrap();
        assert_eq!(s.step_size(1024), 3.0 / 32.0);
        assert!(StepSchedule::power(0.0, 0.5).is_err());
        assert!(StepSchedule::power(1.0, 1.5).is_err());
        let s = StepSchedule::power(1.0, 0.75).unwrap();
        assert!(s.step_size(10) > s.step_size(11));
    }

    fn one_d() -> (ActiveModel, GroupRegularizer, SparseRow) {
        let reg = GroupRegularizer::l1(1);
        let mut model = ActiveModel::zeros(&reg);
        model.beta[0] = 1.0;
        (model, reg, SparseRow::from_dense(&[1.0]))
    }

    #[test]
    fn proxsgd_one_d_composition() {
        // squared loss, x = 1, y = 0, beta = 1 => theta = 1
        let (mut model, reg, x) = one_d();
        let theta = LossModel::new(LossKind::Squared).deriv(1.0, 0.0).unwrap();
        proxsgd_step(&mut model, theta, &x, 0.1, 1.0, &reg).unwrap();
        let expected = oracle::numerical_prox(&reg, &[0.9], 0.1);
        assert!((model.beta[0] - 0.8).abs() < 1e-15);
        assert!((model.beta[0] - expected[0]).abs() < 1e-9);
    }

    #[test]
    fn proxsgd_zero_theta_is_pure_shrinkage() {
        let reg = GroupRegularizer::l1(3);
        let mut model = ActiveModel::zeros(&reg);
        model.beta = vec![1.0, -0.05, 0.3];
        let x = SparseRow::from_dense(&[5.0, 5.0, 5.0]);
        proxsgd_step(&mut model, 0.0, &x, 0.1, 1.0, &reg).unwrap();
        assert_eq!(model.beta, reg.prox(&[1.0, -0.05, 0.3], 0.1).unwrap());
    }

    #[test]
    fn zero_lambda_reduces_to_sgd() {
        let reg = GroupRegularizer::l1(3);
        let x = SparseRow::from_dense(&[1.0, 0.0, -2.0]);
        let mut a = ActiveModel::zeros(&reg);
        a.beta = vec![0.5, -1.0, 2.0];
        let mut b = a.clone();
        proxsgd_step(&mut a, 0.7, &x, 0.2, 0.0, &reg).unwrap();
        sgd_step(&mut b, 0.7, &x, 0.2, 0.0, &reg).unwrap();
        assert_eq!(a.beta, b.beta);
        let expected = [0.5 - 0.2 * 0.7, -1.0, 2.0 + 0.2 * 0.7 * 2.0];
        for (got, want) in a.beta.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_step_formula() {
        let reg = GroupRegularizer::l1(1);
        let mut m = ActiveModel::zeros(&reg);
        sgd_step(&mut m, 0.0, &SparseRow::from_dense(&[3.0]), 0.5, 2.0, &reg).unwrap();
        assert_eq!(m.beta, vec![0.0]);

        m.beta[0] = -0.3;
        let (theta, x, gamma, lambda) = (1.7, 0.4, 0.05, 0.6);
        sgd_step(
            &mut m,
            theta,
            &SparseRow::from_dense(&[x]),
            gamma,
            lambda,
            &reg,
        )
        .unwrap();
        let expected = -0.3 - gamma * (theta * x - lambda);
        assert!((m.beta[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn step_errors() {
        let (mut model, reg, x) = one_d();
        assert!(proxsgd_step(&mut model, 1.0, &x, 0.0, 1.0, &reg).is_err());
        let wide = SparseRow::from_dense(&[1.0, 2.0]);
        assert!(matches!(
            proxsgd_step(&mut model, 1.0, &wide, 0.1, 1.0, &reg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prune_keeps_order_and_maps_back() {
        let reg = GroupRegularizer::l1(5);
        let mut m = ActiveModel::zeros(&reg);
        m.beta = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let p = m.prune(&reg, &[1, 3]);
        assert_eq!(m.beta, vec![1.0, 3.0, 5.0]);
        assert_eq!(m.active_map(), &[0, 2, 4]);
        assert_eq!(p.old_position, vec![0, 2, 4]);
        assert_eq!(p.position_map, vec![Some(0), None, Some(1), None, Some(2)]);
        let p2 = m.prune(&p.reg, &[0]);
        assert_eq!(m.active_map(), &[2, 4]);
        assert_eq!(m.active_groups(), &[2, 4]);
        assert_eq!(p2.kept_groups, vec![1, 2]);
        assert_eq!(m.to_full(), vec![0.0, 0.0, 3.0, 0.0, 5.0]);
    }

    #[test]
    fn orthogonal_design_is_soft_threshold() {
        let data = Dataset::new(
            vec![
                SparseRow::from_dense(&[1.0, 0.0]),
                SparseRow::from_dense(&[0.0, 1.0]),
            ],
            vec![1.0, 0.0],
            2,
        )
        .unwrap();
        let loss = LossModel::new(LossKind::Squared);
        let reg = GroupRegularizer::l1(2);
        // (1/2)Σ ½(β_i − y_i)² + λ|β|₁ => β = soft(y, 2λ)
        let lambda = 0.05;
        let beta = pgd_solve(&data, &loss, &reg, lambda, 1e-12).unwrap();
        assert!((beta[0] - 0.9).abs() < 1e-6);
        assert_eq!(beta[1], 0.0);
        let beta = saga_solve(&data, &loss, &reg, lambda, 1e-12).unwrap();
        assert!((beta[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn solver_input_errors() {
        let data = Dataset::new(vec![], vec![], 3).unwrap();
        let loss = LossModel::new(LossKind::Squared);
        let reg = GroupRegularizer::l1(3);
        assert!(matches!(
            pgd_solve(&data, &loss, &reg, 1.0, 1e-6),
            Err(Error::EmptyDataset)
        ));
        let data =
            Dataset::new(vec![SparseRow::from_dense(&[1.0, 2.0, 3.0])], vec![1.0], 3).unwrap();
        assert!(pgd_solve(&data, &loss, &reg, 1.0, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let data = Dataset::new(
            vec![
                SparseRow::from_dense(&[1.0, 0.3]),
                SparseRow::from_dense(&[0.2, 1.0]),
            ],
            vec![1.0, -2.0],
            2,
        )
        .unwrap();
        let loss = LossModel::new(LossKind::Squared);
        let reg = GroupRegularizer::l1(2);
        let opts = SolveOptions {
            tol: 1e-14,
            max_epochs: 0,
            seed: 0,
        };
        match pgd_solve_with(&data, &loss, &reg, 0.01, &opts) {
            Err(Error::NotConverged { gap, .. }) => assert!(gap > 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }
}
