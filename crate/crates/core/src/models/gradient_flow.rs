use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{Connection, CoupledSystem, Subsystem};
use crate::solvers::{integrate, IntegratorConfig, SolverError};

use super::ModelError;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// `x' = -M ∇P(x)` with the state split into subsystems by `partition`.
#[derive(Clone)]
pub struct GradientFlowModel {
    pub mobility: DMatrix<f64>,
    pub potential: ScalarFn,
    pub gradient: GradientFn,
    pub hessian: HessianFn,
    pub partition: Vec<Vec<usize>>,
}

impl std::fmt::Debug for GradientFlowModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradientFlowModel")
            .field("mobility", &self.mobility)
            .field("partition", &self.partition)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dissipativity {
    /// Symmetric part of `M D²P` positive semidefinite and not zero.
    Dissipative,
    /// Symmetric part of `M D²P` zero.
    Conservative,
    /// Eigenvalues of both signs somewhere.
    Indefinite,
}

impl GradientFlowModel {
    /// Quadratic potential `P = x^T Q x / 2`.
    pub fn quadratic(
        mobility: DMatrix<f64>,
        q: DMatrix<f64>,
        partition: Vec<Vec<usize>>,
    ) -> Result<Self, ModelError> {
        let n = mobility.nrows();
        if mobility.ncols() != n || q.nrows() != n || q.ncols() != n {
            return Err(ModelError::InvalidParameter(
                "mobility and potential matrices must be square of equal size".into(),
            ));
        }
        let q = (&q + q.transpose()) * 0.5;
        let (qa, qb, qc) = (q.clone(), q.clone(), q);
        let model = Self {
            mobility,
            potential: Arc::new(move |x| {
                let v = DVector::from_column_slice(x);
                0.5 * v.dot(&(&qa * &v))
            }),
            gradient: Arc::new(move |x| &qb * DVector::from_column_slice(x)),
            hessian: Arc::new(move |_| qc.clone()),
            partition,
        };
        model.validate()?;
        Ok(model)
    }

    /// Two unit oscillators `(q1, p1)` and `(q2, p2)` joined by a spring of
    /// stiffness `k`, with optional momentum damping `gamma`. Each oscillator
    /// is one subsystem.
    pub fn coupled_oscillators(k: f64, gamma: f64) -> Result<Self, ModelError> {
        if !(k >= 0.0) || !(gamma >= 0.0) {
            return Err(ModelError::InvalidParameter(
                "coupling stiffness and damping must be non-negative".into(),
            ));
        }
        let mut m = DMatrix::zeros(4, 4);
        for o in [0, 2] {
            m[(o, o + 1)] = -1.0;
            m[(o + 1, o)] = 1.0;
            m[(o + 1, o + 1)] = gamma;
        }
        let mut q = DMatrix::identity(4, 4);
        q[(0, 0)] += k;
        q[(2, 2)] += k;
        q[(0, 2)] -= k;
        q[(2, 0)] -= k;
        Self::quadratic(m, q, vec![vec![0, 1], vec![2, 3]])
    }

    pub fn dim(&self) -> usize {
        self.mobility.nrows()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.dim();
        let mut seen = vec![false; n];
        for set in &self.partition {
            if set.is_empty() {
                return Err(ModelError::InvalidPartition("empty index set".into()));
            }
            for &i in set {
                if i >= n {
                    return Err(ModelError::InvalidPartition(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ModelError::InvalidPartition(format!("index {i} used twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ModelError::InvalidPartition(format!("index {i} not covered")));
        }
        Ok(())
    }

    pub fn rhs(&self, x: &[f64]) -> DVector<f64> {
        -(&self.mobility * (self.gradient)(x))
    }

    /// Monolithic adaptive reference solution at `t`.
    pub fn reference(&self, x0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>, SolverError> {
        if t == 0.0 {
            return Ok(x0.to_vec());
        }
        let (x, _) = integrate(
            |_, x: &[f64], dx: &mut [f64]| dx.copy_from_slice(self.rhs(x).as_slice()),
            x0,
            0.0,
            t,
            cfg,
        )?;
        Ok(x)
    }

    /// One block per partition set. Each block takes all remaining state
    /// components (in ascending global order) as inputs and outputs its own
    /// state followed by its own state derivative.
    pub fn system(&self) -> Result<CoupledSystem, ModelError> {
        self.validate()?;
        let n = self.dim();
        let model = Arc::new(self.clone());
        let mut blocks: Vec<Arc<dyn Subsystem>> = Vec::new();
        let mut foreign: Vec<Vec<usize>> = Vec::new();
        for set in &self.partition {
            let others: Vec<usize> = (0..n).filter(|i| !set.contains(i)).collect();
            blocks.push(Arc::new(FlowBlock {
                model: model.clone(),
                own: set.clone(),
                others: others.clone(),
            }));
            foreign.push(others);
        }
        let mut connections = Vec::new();
        for (k, others) in foreign.iter().enumerate() {
            for (l, set) in self.partition.iter().enumerate() {
                if l == k {
                    continue;
                }
                let inputs: Vec<usize> = set
                    .iter()
                    .map(|i| others.iter().position(|o| o == i).expect("foreign index"))
                    .collect();
                let w = set.len();
                connections.push(
                    Connection::new(l, (0..w).collect(), k, inputs).with_rates((w..2 * w).collect()),
                );
            }
        }
        // global state ordered block by block
        let order: Vec<usize> = self.partition.iter().flatten().copied().collect();
        let pot = self.potential.clone();
        let energy = Arc::new(move |xb: &[f64]| {
            let mut x = vec![0.0; xb.len()];
            for (pos, &i) in order.iter().enumerate() {
                x[i] = xb[pos];
            }
            pot(&x)
        });
        Ok(CoupledSystem::new(blocks, connections).with_energy(energy))
    }

    /// Map from natural state order to the block-concatenated order used by
    /// [`GradientFlowModel::system`].
    pub fn to_block_order(&self, x: &[f64]) -> Vec<f64> {
        self.partition.iter().flatten().map(|&i| x[i]).collect()
    }

    pub fn from_block_order(&self, xb: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; xb.len()];
        for (pos, &i) in self.partition.iter().flatten().enumerate() {
            x[i] = xb[pos];
        }
        x
    }
}

struct FlowBlock {
    model: Arc<GradientFlowModel>,
    own: Vec<usize>,
    others: Vec<usize>,
}

impl FlowBlock {
    fn assemble(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.model.dim()];
        for (p, &i) in self.own.iter().enumerate() {
            full[i] = x[p];
        }
        for (p, &i) in self.others.iter().enumerate() {
            full[i] = u[p];
        }
        full
    }
}

impl Subsystem for FlowBlock {
    fn name(&self) -> &str {
        "gradient-flow block"
    }
    fn state_dim(&self) -> usize {
        self.own.len()
    }
    fn input_dim(&self) -> usize {
        self.others.len()
    }
    fn output_dim(&self) -> usize {
        2 * self.own.len()
    }
    fn rhs(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let full = self.assemble(x, u);
        let g = (self.model.gradient)(&full);
        let m = &self.model.mobility;
        for (p, &i) in self.own.iter().enumerate() {
            dx[p] = -(0..g.len()).map(|j| m[(i, j)] * g[j]).sum::<f64>();
        }
    }
    fn output(&self, t: f64, x: &[f64], u: &[f64], y: &mut [f64]) {
        let w = self.own.len();
        y[..w].copy_from_slice(x);
        self.rhs(t, x, u, &mut y[w..]);
    }
}

/// Block matrix `P_kl = <(∇P)_{I_k}, -M_{I_k, I_l} (∇P)_{I_l}>`.
pub fn potential_production(model: &GradientFlowModel, x: &[f64]) -> DMatrix<f64> {
    let g = (model.gradient)(x);
    let m = &model.mobility;
    let parts = &model.partition;
    DMatrix::from_fn(parts.len(), parts.len(), |k, l| {
        let mut acc = 0.0;
        for &i in &parts[k] {
            let mut row = 0.0;
            for &j in &parts[l] {
                row += m[(i, j)] * g[j];
            }
            acc -= g[i] * row;
        }
        acc
    })
}

/// Internal production `Σ_k P_kk`: the rate of change of `P` that remains
/// when the boundary terms cancel.
pub fn internal_production(model: &GradientFlowModel, x: &[f64]) -> f64 {
    potential_production(model, x).diagonal().sum()
}

/// `(M_sym, M_skew)` with `M = M_sym + M_skew`.
pub fn mobility_split(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mt = m.transpose();
    ((m + &mt) * 0.5, (m - &mt) * 0.5)
}

/// Classifies the symmetric part of `M D²P(x)` over the sample states.
pub fn dissipativity_check(model: &GradientFlowModel, samples: &[Vec<f64>]) -> Dissipativity {
    let mut all_zero = true;
    let mut any_negative = false;
    for x in samples {
        let a = &model.mobility * (model.hessian)(x);
        let s = (&a + a.transpose()) * 0.5;
        let tol = 1e-12 * s.amax().max(a.amax()).max(1.0);
        let eig = SymmetricEigen::new(s).eigenvalues;
        if eig.iter().any(|&l| l.abs() > tol) {
            all_zero = false;
        }
        if eig.iter().any(|&l| l < -tol) {
            any_negative = true;
        }
    }
    if all_zero {
        Dissipativity::Conservative
    } else if any_negative {
        Dissipativity::Indefinite
    } else {
        Dissipativity::Dissipative
    }
}

/// `count` states drawn uniformly from `[-2, 2]^n` with a fixed seed.
pub fn sample_states(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gradient(m: DMatrix<f64>, g: [f64; 2]) -> GradientFlowModel {
        // P with constant gradient g: P(x) = g . x
        GradientFlowModel {
            mobility: m,
            potential: Arc::new(move |x| g[0] * x[0] + g[1] * x[1]),
            gradient: Arc::new(move |_| DVector::from_column_slice(&g)),
            hessian: Arc::new(|_| DMatrix::zeros(2, 2)),
            partition: vec![vec![0], vec![1]],
        }
    }

    #[test]
    fn production_skew_example() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let p = potential_production(&linear_gradient(m, [1.0, 2.0]), &[0.0, 0.0]);
        assert_eq!(p[(0, 1)], -2.0);
        assert_eq!(p[(1, 0)], 2.0);
        assert_eq!(p[(0, 0)], 0.0);
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(p.sum(), 0.0);
    }

    #[test]
    fn production_identity_example() {
        let p = potential_production(&linear_gradient(DMatrix::identity(2, 2), [1.0, 2.0]), &[0.0; 2]);
        assert_eq!(p[(0, 0)], -1.0);
        assert_eq!(p[(1, 1)], -4.0);
        assert_eq!(p[(0, 1)], 0.0);
        assert_eq!(p[(1, 0)], 0.0);
    }

    #[test]
    fn spring_mass_hamiltonian_form_conserves() {
        let c = 1.7;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let q = DMatrix::from_row_slice(2, 2, &[c, 0.0, 0.0, 1.0]);
        let model = GradientFlowModel::quadratic(m, q, vec![vec![0], vec![1]]).unwrap();
        for x in sample_states(2, 100, 7) {
            assert!(potential_production(&model, &x).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn split_examples() {
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]);
        let (s, k) = mobility_split(&skew);
        assert_eq!(s, DMatrix::zeros(2, 2));
        assert_eq!(k, skew);
        let sym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let (s, k) = mobility_split(&sym);
        assert_eq!(s, sym);
        assert_eq!(k, DMatrix::zeros(2, 2));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let (s, k) = mobility_split(&m);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert_eq!(s + k, m);
    }

    #[test]
    fn dissipativity_examples() {
        let samples = sample_states(2, 10, 1);
        let id = GradientFlowModel::quadratic(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            vec![vec![0], vec![1]],
        )
        .unwrap();
        assert_eq!(dissipativity_check(&id, &samples), Dissipativity::Dissipative);
        let skew = GradientFlowModel::quadratic(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::identity(2, 2),
            vec![vec![0], vec![1]],
        )
        .unwrap();
        assert_eq!(dissipativity_check(&skew, &samples), Dissipativity::Conservative);
        let mixed = GradientFlowModel::quadratic(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            DMatrix::identity(2, 2),
            vec![vec![0], vec![1]],
        )
        .unwrap();
        assert_eq!(dissipativity_check(&mixed, &samples), Dissipativity::Indefinite);
    }

    #[test]
    fn partition_validation() {
        let q = DMatrix::identity(3, 3);
        let m = DMatrix::identity(3, 3);
        for bad in [vec![vec![0, 1]], vec![vec![0, 1], vec![1, 2]], vec![vec![0, 1, 2], vec![]], vec![vec![0, 1, 3]]] {
            assert!(GradientFlowModel::quadratic(m.clone(), q.clone(), bad).is_err());
        }
    }

    #[test]
    fn block_rhs_matches_model() {
        let model = GradientFlowModel::coupled_oscillators(0.5, 0.1).unwrap();
        let sys = model.system().unwrap();
        for x in sample_states(4, 20, 3) {
            let want = model.rhs(&x);
            for (k, set) in model.partition.iter().enumerate() {
                let others: Vec<f64> = (0..4).filter(|i| !set.contains(i)).map(|i| x[i]).collect();
                let own: Vec<f64> = set.iter().map(|&i| x[i]).collect();
                let mut dx = vec![0.0; set.len()];
                sys.blocks[k].rhs(0.0, &own, &others, &mut dx);
                for (p, &i) in set.iter().enumerate() {
                    assert!((dx[p] - want[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn samples_are_reproducible_and_bounded() {
        let a = sample_states(3, 100, 42);
        assert_eq!(a, sample_states(3, 100, 42));
        assert!(a.iter().flatten().all(|v| (-2.0..=2.0).contains(v)));
        assert_ne!(a, sample_states(3, 100, 43));
    }
}
