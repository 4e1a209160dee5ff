//! Reverse-mode differentiation over dense matrices.
//!
//! Nodes are appended in evaluation order, so the node index is a valid
//! topological order and the backward sweep simply walks it in reverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::kernel::sqdist_raw;
use crate::matrix::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// N×M plus a broadcast 1×M row.
    AddRow(Var, Var),
    /// N×M times a broadcast 1×M row.
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    /// Entry (i, j) is ‖aᵢ - bⱼ‖².
    PairwiseSqDist(Var, Var),
    /// N×M to N×1.
    SumRows(Var),
    /// N×M to 1×M.
    SumCols(Var),
    /// N×M to 1×1.
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// A recording of one forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node that depends on a differentiable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` when `v` does not influence the loss through differentiable
    /// paths.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// The adjoint, or zeros shaped like `like` when none flowed.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

fn same_shape(op: &str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "{op}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn row_compatible(op: &str, a: &Matrix, row: &Matrix) -> Result<()> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(dim_err(format!(
            "{op}: row operand {}x{} does not broadcast over {}x{}",
            row.rows(),
            row.cols(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

fn broadcast_row(a: &Matrix, row: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let mut out = a.clone();
    let r = row.as_slice();
    for i in 0..out.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(r) {
            *o = f(*o, b);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable input such as a parameter.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input excluded from differentiation.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let g = self.grad_of(&[a]);
        self.push(value, op, g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    fn zip(&mut self, name: &str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        same_shape(name, self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), f);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        row_compatible("add_row", self.value(a), self.value(row))?;
        let value = broadcast_row(self.value(a), self.value(row), |x, y| x + y);
        let g = self.grad_of(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), g))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        row_compatible("mul_row", self.value(a), self.value(row))?;
        let value = broadcast_row(self.value(a), self.value(row), |x, y| x * y);
        let g = self.grad_of(&[a, row]);
        Ok(self.push(value, Op::MulRow(a, row), g))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn pairwise_sqdist(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = sqdist_raw(self.value(a), self.value(b))?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::PairwiseSqDist(a, b), g))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).row_sums();
        let g = self.grad_of(&[a]);
        self.push(value, Op::SumRows(a), g)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).col_sums();
        let g = self.grad_of(&[a]);
        self.push(value, Op::SumCols(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let g = self.grad_of(&[a]);
        self.push(value, Op::Sum(a), g)
    }

    /// Backpropagates from a 1×1 node seeded with adjoint 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "loss must be 1x1, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(existing) => existing.axpy(1.0, &contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    acc(a, g.matmul_t(val(b)).expect("shapes checked in forward"));
                }
                if wants(b) {
                    acc(b, val(a).t_matmul(g).expect("shapes checked in forward"));
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                if wants(b) {
                    acc(b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    acc(a, g.zip_map(val(b), |x, y| x * y));
                }
                if wants(b) {
                    acc(b, g.zip_map(val(a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                if wants(a) {
                    acc(a, g.zip_map(val(b), |x, y| x / y));
                }
                if wants(b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = node.value.zip_map(val(b), |c, y| c / y);
                    acc(b, g.zip_map(&q, |x, y| -x * y));
                }
            }
            Op::AddRow(a, row) => {
                acc(a, g.clone());
                if wants(row) {
                    acc(row, g.col_sums());
                }
            }
            Op::MulRow(a, row) => {
                if wants(a) {
                    acc(a, broadcast_row(g, val(row), |x, y| x * y));
                }
                if wants(row) {
                    acc(row, g.zip_map(val(a), |x, y| x * y).col_sums());
                }
            }
            Op::Scale(a, s) => acc(a, g.map(|x| x * s)),
            Op::AddScalar(a) => acc(a, g.clone()),
            Op::Relu(a) => acc(a, g.zip_map(val(a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Exp(a) => acc(a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Log(a) => acc(a, g.zip_map(val(a), |x, y| x / y)),
            Op::Sqrt(a) => acc(a, g.zip_map(&node.value, |x, y| x / (2.0 * y))),
            Op::Square(a) => acc(a, g.zip_map(val(a), |x, y| 2.0 * x * y)),
            Op::PairwiseSqDist(a, b) => {
                // ∂/∂aᵢ = 2 Σⱼ Gᵢⱼ (aᵢ - bⱼ), ∂/∂bⱼ = -2 Σᵢ Gᵢⱼ (aᵢ - bⱼ)
                let (am, bm) = (val(a), val(b));
                if wants(a) {
                    let rs = g.row_sums();
                    let gb = g.matmul(bm).expect("shapes checked in forward");
                    let mut da = Matrix::zeros(am.rows(), am.cols());
                    for i in 0..am.rows() {
                        let r = rs.as_slice()[i];
                        for ((o, &x), &y) in da.row_mut(i).iter_mut().zip(am.row(i)).zip(gb.row(i)) {
                            *o = 2.0 * (r * x - y);
                        }
                    }
                    acc(a, da);
                }
                if wants(b) {
                    let cs = g.col_sums();
                    let ga = g.t_matmul(am).expect("shapes checked in forward");
                    let mut db = Matrix::zeros(bm.rows(), bm.cols());
                    for j in 0..bm.rows() {
                        let c = cs.as_slice()[j];
                        for ((o, &x), &y) in db.row_mut(j).iter_mut().zip(bm.row(j)).zip(ga.row(j)) {
                            *o = 2.0 * (c * x - y);
                        }
                    }
                    acc(b, db);
                }
            }
            Op::SumRows(a) => {
                let s = val(a);
                acc(a, Matrix::from_fn(s.rows(), s.cols(), |i, _| g.as_slice()[i]));
            }
            Op::SumCols(a) => {
                let s = val(a);
                acc(a, Matrix::from_fn(s.rows(), s.cols(), |_, j| g.as_slice()[j]));
            }
            Op::Sum(a) => {
                let s = val(a);
                acc(a, Matrix::filled(s.rows(), s.cols(), g.item()));
            }
        }
    }
}
