//! Residual MLP backbone: input linear, residual blocks of
//! [linear -> batchnorm -> ReLU -> dropout] x2 with an additive skip, and an
//! output linear. Reverse-mode gradients run off a tape recorded during the
//! forward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::NnError;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout_p: f64,
    pub output_dim: usize,
    pub use_batchnorm: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dim: 1024,
            n_blocks: 2,
            dropout_p: 0.1,
            output_dim,
            use_batchnorm: true,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(NnError::Shape("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NnError::Shape(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        // Kaiming-uniform for ReLU nets; biases start at zero.
        let bound = (6.0 / in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Linear {
            w: Matrix::from_vec(in_dim, out_dim, data).expect("init shape"),
            b: Matrix::zeros(1, out_dim),
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        x.matmul(&self.w).add_row(&self.b)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
}

impl BatchNorm {
    fn init(dim: usize) -> Self {
        BatchNorm {
            gamma: Matrix::from_vec(1, dim, vec![1.0; dim]).expect("init"),
            beta: Matrix::zeros(1, dim),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::from_vec(1, dim, vec![1.0; dim]).expect("init"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub lin1: Linear,
    pub bn1: Option<BatchNorm>,
    pub lin2: Linear,
    pub bn2: Option<BatchNorm>,
}

/// The full network: parameters plus spec.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub input: Linear,
    pub blocks: Vec<Block>,
    pub output: Linear,
}

#[derive(Debug)]
struct BnTape {
    xhat: Matrix,
    inv_std: Vec<f64>,
    train: bool,
}

#[derive(Debug)]
struct SubTape {
    lin_x: Matrix,
    bn: Option<BnTape>,
    relu_mask: Matrix,
    drop_mask: Option<Matrix>,
}

#[derive(Debug)]
struct BlockTape {
    sub1: SubTape,
    sub2: SubTape,
}

/// Intermediates recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct MlpTape {
    input_x: Matrix,
    blocks: Vec<BlockTape>,
    output_x: Matrix,
}

struct BnUpdate {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let input = Linear::init(spec.input_dim, spec.hidden_dim, rng);
        let blocks = (0..spec.n_blocks)
            .map(|_| Block {
                lin1: Linear::init(spec.hidden_dim, spec.hidden_dim, rng),
                bn1: spec.use_batchnorm.then(|| BatchNorm::init(spec.hidden_dim)),
                lin2: Linear::init(spec.hidden_dim, spec.hidden_dim, rng),
                bn2: spec.use_batchnorm.then(|| BatchNorm::init(spec.hidden_dim)),
            })
            .collect();
        let output = Linear::init(spec.hidden_dim, spec.output_dim, rng);
        Ok(Mlp {
            spec,
            input,
            blocks,
            output,
        })
    }

    /// Training forward pass; updates batchnorm running statistics.
    pub fn forward(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Matrix, MlpTape), NnError> {
        let (y, tape, updates) = forward_impl(self, x, mode, Some(rng))?;
        if mode == Mode::Train {
            self.apply_bn_updates(updates);
        }
        Ok((y, tape))
    }

    /// Eval-mode forward with a tape, without touching any state. Used to
    /// backpropagate through a frozen network.
    pub fn forward_frozen(&self, x: &Matrix) -> Result<(Matrix, MlpTape), NnError> {
        let (y, tape, _) = forward_impl::<rand_chacha::ChaCha8Rng>(self, x, Mode::Eval, None)?;
        Ok((y, tape))
    }

    /// Eval-mode forward, output only.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward_frozen(x)?.0)
    }

    fn apply_bn_updates(&mut self, updates: Vec<BnUpdate>) {
        let mut it = updates.into_iter();
        for block in &mut self.blocks {
            for bn in [&mut block.bn1, &mut block.bn2].into_iter().flatten() {
                let up = it.next().expect("one update per batchnorm");
                for (j, (&m, &v)) in up.mean.iter().zip(&up.var).enumerate() {
                    let rm = bn.running_mean.get(0, j);
                    let rv = bn.running_var.get(0, j);
                    bn.running_mean
                        .set(0, j, (1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * m);
                    bn.running_var
                        .set(0, j, (1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * v);
                }
            }
        }
    }

    /// Trainable tensors in a fixed order (weights, biases, bn scale/shift).
    pub fn trainable(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.input.w, &self.input.b];
        for block in &self.blocks {
            out.push(&block.lin1.w);
            out.push(&block.lin1.b);
            if let Some(bn) = &block.bn1 {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
            out.push(&block.lin2.w);
            out.push(&block.lin2.b);
            if let Some(bn) = &block.bn2 {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out.push(&self.output.w);
        out.push(&self.output.b);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.input.w, &mut self.input.b];
        for block in &mut self.blocks {
            out.push(&mut block.lin1.w);
            out.push(&mut block.lin1.b);
            if let Some(bn) = &mut block.bn1 {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
            out.push(&mut block.lin2.w);
            out.push(&mut block.lin2.b);
            if let Some(bn) = &mut block.bn2 {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    /// All tensors (including batchnorm running statistics) with their
    /// checkpoint names, in a fixed order.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            (format!("{prefix}.input.w"), &self.input.w),
            (format!("{prefix}.input.b"), &self.input.b),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("{prefix}.block{i}.lin1.w"), &block.lin1.w));
            out.push((format!("{prefix}.block{i}.lin1.b"), &block.lin1.b));
            if let Some(bn) = &block.bn1 {
                out.push((format!("{prefix}.block{i}.bn1.gamma"), &bn.gamma));
                out.push((format!("{prefix}.block{i}.bn1.beta"), &bn.beta));
                out.push((format!("{prefix}.block{i}.bn1.running_mean"), &bn.running_mean));
                out.push((format!("{prefix}.block{i}.bn1.running_var"), &bn.running_var));
            }
            out.push((format!("{prefix}.block{i}.lin2.w"), &block.lin2.w));
            out.push((format!("{prefix}.block{i}.lin2.b"), &block.lin2.b));
            if let Some(bn) = &block.bn2 {
                out.push((format!("{prefix}.block{i}.bn2.gamma"), &bn.gamma));
                out.push((format!("{prefix}.block{i}.bn2.beta"), &bn.beta));
                out.push((format!("{prefix}.block{i}.bn2.running_mean"), &bn.running_mean));
                out.push((format!("{prefix}.block{i}.bn2.running_var"), &bn.running_var));
            }
        }
        out.push((format!("{prefix}.output.w"), &self.output.w));
        out.push((format!("{prefix}.output.b"), &self.output.b));
        out
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = vec![
            (format!("{prefix}.input.w"), &mut self.input.w),
            (format!("{prefix}.input.b"), &mut self.input.b),
        ];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            out.push((format!("{prefix}.block{i}.lin1.w"), &mut block.lin1.w));
            out.push((format!("{prefix}.block{i}.lin1.b"), &mut block.lin1.b));
            if let Some(bn) = &mut block.bn1 {
                out.push((format!("{prefix}.block{i}.bn1.gamma"), &mut bn.gamma));
                out.push((format!("{prefix}.block{i}.bn1.beta"), &mut bn.beta));
                out.push((
                    format!("{prefix}.block{i}.bn1.running_mean"),
                    &mut bn.running_mean,
                ));
                out.push((
                    format!("{prefix}.block{i}.bn1.running_var"),
                    &mut bn.running_var,
                ));
            }
            out.push((format!("{prefix}.block{i}.lin2.w"), &mut block.lin2.w));
            out.push((format!("{prefix}.block{i}.lin2.b"), &mut block.lin2.b));
            if let Some(bn) = &mut block.bn2 {
                out.push((format!("{prefix}.block{i}.bn2.gamma"), &mut bn.gamma));
                out.push((format!("{prefix}.block{i}.bn2.beta"), &mut bn.beta));
                out.push((
                    format!("{prefix}.block{i}.bn2.running_mean"),
                    &mut bn.running_mean,
                ));
                out.push((
                    format!("{prefix}.block{i}.bn2.running_var"),
                    &mut bn.running_var,
                ));
            }
        }
        out.push((format!("{prefix}.output.w"), &mut self.output.w));
        out.push((format!("{prefix}.output.b"), &mut self.output.b));
        out
    }

    /// Overwrites all tensors from a name -> matrix map (checkpoint load).
    pub fn load_tensors(
        &mut self,
        prefix: &str,
        tensors: &std::collections::HashMap<String, Matrix>,
    ) -> Result<(), NnError> {
        for (name, slot) in self.named_tensors_mut(prefix) {
            let src = tensors
                .get(&name)
                .ok_or_else(|| NnError::Shape(format!("missing tensor {name}")))?;
            if !slot.same_shape(src) {
                return Err(NnError::Shape(format!(
                    "tensor {name}: expected {}x{}, got {}x{}",
                    slot.rows(),
                    slot.cols(),
                    src.rows(),
                    src.cols()
                )));
            }
            *slot = src.clone();
        }
        Ok(())
    }

    /// Gradients for every trainable tensor (same order as [`Mlp::trainable`])
    /// plus the gradient with respect to the input.
    pub fn backward(&self, tape: &MlpTape, grad_y: &Matrix) -> Result<(Vec<Matrix>, Matrix), NnError> {
        if grad_y.cols() != self.spec.output_dim || grad_y.rows() != tape.output_x.rows() {
            return Err(NnError::Shape(format!(
                "grad_y is {}x{}, expected {}x{}",
                grad_y.rows(),
                grad_y.cols(),
                tape.output_x.rows(),
                self.spec.output_dim
            )));
        }
        // Collected in reverse and flipped at the end.
        let mut rev: Vec<Matrix> = Vec::new();

        // output linear
        let (dw, db, mut g) = linear_backward(&self.output, &tape.output_x, grad_y);
        rev.push(db);
        rev.push(dw);

        for (block, btape) in self.blocks.iter().zip(&tape.blocks).rev() {
            // out = h + sub2(sub1(h)); g flows through both paths
            let g_skip = g.clone();
            let (mut sub_grads2, g_u1) =
                sub_backward(&block.lin2, &block.bn2, &btape.sub2, &g);
            let (mut sub_grads1, g_h) =
                sub_backward(&block.lin1, &block.bn1, &btape.sub1, &g_u1);
            rev.append(&mut sub_grads2);
            rev.append(&mut sub_grads1);
            g = g_h;
            g.add_assign(&g_skip);
        }

        let (dw, db, g_x) = linear_backward(&self.input, &tape.input_x, &g);
        rev.push(db);
        rev.push(dw);

        rev.reverse();
        Ok((rev, g_x))
    }
}

/// dW, db, dX for `y = x W + b`.
fn linear_backward(lin: &Linear, x: &Matrix, g: &Matrix) -> (Matrix, Matrix, Matrix) {
    let dw = x.matmul_tn(g);
    let db = g.sum_rows();
    let dx = g.matmul_nt(&lin.w);
    (dw, db, dx)
}

/// Gradients for one sub-layer in reverse order [lin.b?, ..] matching the
/// forward parameter order reversed: returns [bn.beta, bn.gamma, lin.b, lin.w]
/// reversed appropriately for the caller, plus dX.
fn sub_backward(
    lin: &Linear,
    bn: &Option<BatchNorm>,
    tape: &SubTape,
    g_out: &Matrix,
) -> (Vec<Matrix>, Matrix) {
    // dropout
    let g_after_relu = match &tape.drop_mask {
        Some(mask) => g_out.zip_map(mask, |g, m| g * m),
        None => g_out.clone(),
    };
    // relu
    let g_pre_relu = g_after_relu.zip_map(&tape.relu_mask, |g, m| g * m);
    // batchnorm
    let mut rev: Vec<Matrix> = Vec::new();
    let g_lin = match (bn, &tape.bn) {
        (Some(bn), Some(bt)) => {
            let (dgamma, dbeta, dx) = bn_backward(bn, bt, &g_pre_relu);
            rev.push(dbeta);
            rev.push(dgamma);
            dx
        }
        _ => g_pre_relu,
    };
    let (dw, db, dx) = linear_backward(lin, &tape.lin_x, &g_lin);
    rev.push(db);
    rev.push(dw);
    (rev, dx)
}

fn bn_backward(bn: &BatchNorm, tape: &BnTape, g: &Matrix) -> (Matrix, Matrix, Matrix) {
    let rows = g.rows();
    let cols = g.cols();
    let mut dgamma = Matrix::zeros(1, cols);
    let mut dbeta = Matrix::zeros(1, cols);
    for r in 0..rows {
        for c in 0..cols {
            let gv = g.get(r, c);
            dgamma.data_mut()[c] += gv * tape.xhat.get(r, c);
            dbeta.data_mut()[c] += gv;
        }
    }
    let mut dx = Matrix::zeros(rows, cols);
    if tape.train {
        // dxhat = g * gamma; dx folds in the batch statistics' dependence on x
        let m = rows as f64;
        for c in 0..cols {
            let gamma = bn.gamma.get(0, c);
            let inv_std = tape.inv_std[c];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for r in 0..rows {
                let dxhat = g.get(r, c) * gamma;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * tape.xhat.get(r, c);
            }
            for r in 0..rows {
                let dxhat = g.get(r, c) * gamma;
                let v = inv_std / m
                    * (m * dxhat - sum_dxhat - tape.xhat.get(r, c) * sum_dxhat_xhat);
                dx.set(r, c, v);
            }
        }
    } else {
        for c in 0..cols {
            let scale = bn.gamma.get(0, c) * tape.inv_std[c];
            for r in 0..rows {
                dx.set(r, c, g.get(r, c) * scale);
            }
        }
    }
    (dgamma, dbeta, dx)
}

fn bn_forward(
    bn: &BatchNorm,
    x: &Matrix,
    mode: Mode,
) -> (Matrix, BnTape, Option<BnUpdate>) {
    let rows = x.rows();
    let cols = x.cols();
    let mut y = Matrix::zeros(rows, cols);
    let mut xhat = Matrix::zeros(rows, cols);
    let mut inv_std = vec![0.0; cols];
    match mode {
        Mode::Train => {
            let m = rows.max(1) as f64;
            let mut means = vec![0.0; cols];
            let mut vars = vec![0.0; cols];
            for c in 0..cols {
                let mut mean = 0.0;
                for r in 0..rows {
                    mean += x.get(r, c);
                }
                mean /= m;
                let mut var = 0.0;
                for r in 0..rows {
                    let d = x.get(r, c) - mean;
                    var += d * d;
                }
                var /= m;
                means[c] = mean;
                vars[c] = var;
                let is = 1.0 / (var + BN_EPS).sqrt();
                inv_std[c] = is;
                let gamma = bn.gamma.get(0, c);
                let beta = bn.beta.get(0, c);
                for r in 0..rows {
                    let xh = (x.get(r, c) - mean) * is;
                    xhat.set(r, c, xh);
                    y.set(r, c, gamma * xh + beta);
                }
            }
            (
                y,
                BnTape {
                    xhat,
                    inv_std,
                    train: true,
                },
                Some(BnUpdate {
                    mean: means,
                    var: vars,
                }),
            )
        }
        Mode::Eval => {
            for c in 0..cols {
                let mean = bn.running_mean.get(0, c);
                let var = bn.running_var.get(0, c);
                let is = 1.0 / (var + BN_EPS).sqrt();
                inv_std[c] = is;
                let gamma = bn.gamma.get(0, c);
                let beta = bn.beta.get(0, c);
                for r in 0..rows {
                    let xh = (x.get(r, c) - mean) * is;
                    xhat.set(r, c, xh);
                    y.set(r, c, gamma * xh + beta);
                }
            }
            (
                y,
                BnTape {
                    xhat,
                    inv_std,
                    train: false,
                },
                None,
            )
        }
    }
}

fn sub_forward<R: Rng>(
    lin: &Linear,
    bn: &Option<BatchNorm>,
    dropout_p: f64,
    x: &Matrix,
    mode: Mode,
    rng: &mut Option<&mut R>,
    updates: &mut Vec<BnUpdate>,
) -> (Matrix, SubTape) {
    let lin_x = x.clone();
    let a = lin.forward(x);
    let (b, bn_tape) = match bn {
        Some(bn) => {
            let (y, tape, update) = bn_forward(bn, &a, mode);
            if let Some(u) = update {
                updates.push(u);
            }
            (y, Some(tape))
        }
        None => (a, None),
    };
    let relu_mask = b.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let c = b.zip_map(&relu_mask, |v, m| v * m);
    let (d, drop_mask) = if mode == Mode::Train && dropout_p > 0.0 {
        let rng = rng
            .as_mut()
            .expect("train-mode dropout requires an RNG");
        let keep = 1.0 - dropout_p;
        let mask = c.map(|_| {
            if rng.random::<f64>() < dropout_p {
                0.0
            } else {
                1.0 / keep
            }
        });
        (c.zip_map(&mask, |v, m| v * m), Some(mask))
    } else {
        (c, None)
    };
    (
        d,
        SubTape {
            lin_x,
            bn: bn_tape,
            relu_mask,
            drop_mask,
        },
    )
}

fn forward_impl<R: Rng>(
    mlp: &Mlp,
    x: &Matrix,
    mode: Mode,
    mut rng: Option<&mut R>,
) -> Result<(Matrix, MlpTape, Vec<BnUpdate>), NnError> {
    if x.cols() != mlp.spec.input_dim {
        return Err(NnError::Shape(format!(
            "input is {}x{}, expected {} columns",
            x.rows(),
            x.cols(),
            mlp.spec.input_dim
        )));
    }
    let mut updates = Vec::new();
    let input_x = x.clone();
    let mut h = mlp.input.forward(x);
    let mut block_tapes = Vec::with_capacity(mlp.blocks.len());
    for block in &mlp.blocks {
        let (u1, sub1) = sub_forward(
            &block.lin1,
            &block.bn1,
            mlp.spec.dropout_p,
            &h,
            mode,
            &mut rng,
            &mut updates,
        );
        let (u2, sub2) = sub_forward(
            &block.lin2,
            &block.bn2,
            mlp.spec.dropout_p,
            &u1,
            mode,
            &mut rng,
            &mut updates,
        );
        h = h.add(&u2);
        block_tapes.push(BlockTape { sub1, sub2 });
    }
    let output_x = h.clone();
    let y = mlp.output.forward(&h);
    Ok((
        y,
        MlpTape {
            input_x,
            blocks: block_tapes,
            output_x,
        },
        updates,
    ))
}
