//! Central finite-difference checks of every differentiable op.
//!
//! Each check reduces the op output to a scalar with a fixed random
//! projection, then compares tape gradients against
//! `(f(x + h) − f(x − h)) / 2h` element by element.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{BackwardOp, Tape, Var};
use crate::conv::ConvGeometry;
use crate::error::Result;
use crate::loss::{combo_loss, l1_loss, mse_loss, sam_loss};
use crate::model::{build, forward_tape, BlockKind, BoundParams, SsrnetConfig};
use crate::tensor::{Shape5, Tensor5};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Pass threshold for the maximum relative error.
pub const TOLERANCE: f64 = 1e-5;

/// Worst relative error seen for one op.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub op: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(GradcheckRow::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradcheckRow> {
        self.rows.iter().filter(|r| !r.passed())
    }
}

/// `|a − n| / max(|a|, |n|, floor)` with `floor = max(1e-3·‖n‖∞, 1e-6)`,
/// so entries that are tiny relative to the whole gradient do not dominate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = numeric.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let floor = (1e-3 * inf).max(1e-6);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| libm::fabs(a - n) / libm::fabs(*a).max(libm::fabs(*n)).max(floor))
        .fold(0.0, f64::max)
}

/// `Σ wᵢ xᵢ` with fixed weights; turns any output into a scalar.
struct ProjectOp {
    weights: Vec<f64>,
}

impl BackwardOp for ProjectOp {
    fn name(&self) -> &'static str {
        "project"
    }

    fn backward(&self, _inputs: &[&Tensor5], _output: &Tensor5, grad_output: &[f64], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![wanted[0].then(|| self.weights.iter().map(|w| w * grad_output[0]).collect())]
    }
}

fn project(tape: &mut Tape, x: Var, weights: &[f64]) -> Var {
    let value: f64 = tape.value(x).data().iter().zip(weights).map(|(a, b)| a * b).sum();
    tape.record(&[x], Tensor5::scalar(value), Box::new(ProjectOp { weights: weights.to_vec() }))
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5 {
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor5::from_vec(shape, data).expect("length matches shape")
}

/// Values in `±[0.1, 1]`, away from the kinks of ReLU and `|·|`.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5 {
    let data = (0..shape.numel())
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor5::from_vec(shape, data).expect("length matches shape")
}

type Builder<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;
/// Projected scalar, per-input gradients and the projection weights.
type Evaluation = (f64, Vec<Option<Vec<f64>>>, Vec<f64>);

/// Checks the gradient of `build` with respect to every input marked in `wrt`.
fn check(op: &str, inputs: &[Tensor5], wrt: &[bool], fault: Option<&'static str>, seed: u64, build: &Builder<'_>) -> Result<GradcheckRow> {
    let scalar_of = |values: &[Tensor5], weights: Option<&[f64]>, grads: bool| -> Result<Evaluation> {
        let mut tape = Tape::new();
        if let Some(f) = fault {
            tape.inject_fault(f);
        }
        let vars: Vec<Var> = values
            .iter()
            .zip(wrt)
            .map(|(t, &g)| if g && grads { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let out = build(&mut tape, &vars)?;
        let w: Vec<f64> = match weights {
            Some(w) => w.to_vec(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
                (0..tape.shape(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        };
        let s = project(&mut tape, out, &w);
        let value = tape.value(s).data()[0];
        let mut g = Vec::new();
        if grads {
            tape.backward(s)?;
            g = vars.iter().map(|&v| tape.grad(v).map(<[f64]>::to_vec)).collect();
        }
        Ok((value, g, w))
    };

    let (_, analytic, weights) = scalar_of(inputs, None, true)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (i, input) in inputs.iter().enumerate() {
        if !wrt[i] {
            continue;
        }
        let a = analytic[i].clone().unwrap_or_else(|| vec![0.0; input.shape().numel()]);
        let mut numeric = vec![0.0; a.len()];
        let mut values = inputs.to_vec();
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = input.data()[j];
            values[i].data_mut()[j] = orig + STEP;
            let (fp, _, _) = scalar_of(&values, Some(&weights), false)?;
            values[i].data_mut()[j] = orig - STEP;
            let (fm, _, _) = scalar_of(&values, Some(&weights), false)?;
            values[i].data_mut()[j] = orig;
            *slot = (fp - fm) / (2.0 * STEP);
        }
        worst = worst.max(max_relative_error(&a, &numeric));
        checked += a.len();
    }
    Ok(GradcheckRow {
        op: op.into(),
        max_rel_error: worst,
        checked,
    })
}

fn per_op_rows(fault: Option<&'static str>, seed: u64) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    let x = random_tensor(&mut rng, Shape5::new(2, 2, 4, 5, 4));
    let w = random_tensor(&mut rng, Shape5::new(3, 2, 3, 2, 3));
    let b = random_tensor(&mut rng, Shape5::new(1, 3, 1, 1, 1));
    let geom = ConvGeometry {
        stride: [1, 2, 1],
        padding: [1, 0, 1],
        output_padding: [0, 0, 0],
        transposed: false,
    };
    rows.push(check("conv3d", &[x, w, b], &[true; 3], fault, seed + 1, &move |t, v| {
        t.conv3d(v[0], v[1], v[2], geom)
    })?);

    let x = random_tensor(&mut rng, Shape5::new(1, 3, 3, 3, 2));
    let w = random_tensor(&mut rng, Shape5::new(3, 2, 3, 4, 4));
    let b = random_tensor(&mut rng, Shape5::new(1, 2, 1, 1, 1));
    let geom = ConvGeometry::transposed([1, 3, 2], [1, 2, 1], [0, 1, 0]);
    rows.push(check("conv3d_transposed", &[x, w, b], &[true; 3], fault, seed + 2, &move |t, v| {
        t.conv3d_transposed(v[0], v[1], v[2], geom)
    })?);

    let x = away_from_zero(&mut rng, Shape5::new(1, 2, 3, 3, 3));
    rows.push(check("relu", &[x], &[true], fault, seed + 3, &|t, v| Ok(t.relu(v[0])))?);

    let s = Shape5::new(1, 2, 2, 3, 2);
    let (a, b2) = (random_tensor(&mut rng, s), random_tensor(&mut rng, s));
    rows.push(check("add", &[a, b2], &[true, true], fault, seed + 4, &|t, v| t.add(v[0], v[1]))?);

    let x = random_tensor(&mut rng, s);
    rows.push(check("scale", &[x], &[true], fault, seed + 5, &|t, v| Ok(t.scale(v[0], -0.7)))?);

    let parts: Vec<Tensor5> = [1, 3, 2]
        .iter()
        .map(|&c| random_tensor(&mut rng, Shape5::new(2, c, 2, 2, 3)))
        .collect();
    rows.push(check("concat_channels", &parts, &[true; 3], fault, seed + 6, &|t, v| t.concat_channels(v))?);

    let x = random_tensor(&mut rng, Shape5::new(2, 5, 2, 2, 2));
    rows.push(check("slice_channels", &[x], &[true], fault, seed + 7, &|t, v| t.slice_channels(v[0], 1, 3))?);

    let x = random_tensor(&mut rng, s);
    rows.push(check("sum", &[x], &[true], fault, seed + 8, &|t, v| Ok(t.sum(v[0])))?);

    // losses: second operand offset so |sr − hr| stays away from 0
    let ls = Shape5::new(2, 1, 4, 3, 3);
    let hr = random_tensor(&mut rng, ls);
    let gap = away_from_zero(&mut rng, ls);
    let sr = Tensor5::from_vec(ls, hr.data().iter().zip(gap.data()).map(|(h, g)| h + g).collect())?;
    let pair = [sr, hr];
    rows.push(check("l1_loss", &pair, &[true, true], fault, seed + 9, &|t, v| l1_loss(t, v[0], v[1]))?);
    rows.push(check("mse_loss", &pair, &[true, true], fault, seed + 10, &|t, v| mse_loss(t, v[0], v[1]))?);
    rows.push(check("sam_loss", &pair, &[true, true], fault, seed + 11, &|t, v| {
        Ok(sam_loss(t, v[0], v[1])?.var)
    })?);
    rows.push(check("combo_loss", &pair, &[true, true], fault, seed + 12, &|t, v| {
        Ok(combo_loss(t, v[0], v[1])?.var)
    })?);
    Ok(rows)
}

/// Configuration of the end-to-end check: 4 filters, one module of one unit.
pub fn tiny_model(block_kind: BlockKind) -> SsrnetConfig {
    SsrnetConfig {
        d_modules: 1,
        units_per_module: 1,
        filters: 4,
        block_kind,
        ..Default::default()
    }
}

/// Gradient of an MSE loss through the whole network, with respect to the
/// input cube and every parameter, on an `(L=5, 6×6)` input at ×2.
pub fn end_to_end_row(block_kind: BlockKind, fault: Option<&'static str>, seed: u64) -> Result<GradcheckRow> {
    let config = tiny_model(block_kind);
    let mut store = build(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE2E);
    // Zero biases leave dead-ReLU regions whose pre-activations are exactly
    // 0, right on the kink; small random biases move them off it.
    for (_, p) in store.iter_mut() {
        p.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let input = random_tensor(&mut rng, Shape5::new(1, 1, 5, 6, 6));
    let target = random_tensor(&mut rng, Shape5::new(1, 1, 5, 12, 12));

    let names: Vec<String> = store.iter().map(|(n, _)| n.clone()).collect();
    // inputs: the LR cube, then weight and bias of each layer in name order
    let mut tensors = vec![input];
    for name in &names {
        let p = store.layer(name)?;
        tensors.push(p.weight.clone());
        let c = p.bias.len();
        tensors.push(Tensor5::from_vec(Shape5::new(1, c, 1, 1, 1), p.bias.clone())?);
    }
    let wrt = vec![true; tensors.len()];
    let op = format!("end_to_end_{}", block_kind.as_str());
    check(&op, &tensors, &wrt, fault, seed + 13, &|tape, vars| {
        let entries = names.iter().enumerate().map(|(i, n)| (n.clone(), vars[1 + 2 * i], vars[2 + 2 * i]));
        let bound = BoundParams::from_vars(entries, &store)?;
        let sr = forward_tape(tape, vars[0], &bound, &config)?;
        let hr = tape.constant(target.clone());
        mse_loss(tape, sr, hr)
    })
}

/// Runs every per-op check plus both end-to-end models.
pub fn run_suite(fault: Option<&'static str>, seed: u64) -> Result<GradcheckReport> {
    let mut rows = per_op_rows(fault, seed)?;
    rows.push(end_to_end_row(BlockKind::Separable, fault, seed)?);
    rows.push(end_to_end_row(BlockKind::Standard, fault, seed)?);
    Ok(GradcheckReport { rows })
}
