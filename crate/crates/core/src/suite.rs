//! Finite-difference gradient suite shared by the `gradcheck` command and
//! the acceptance tests: every tape primitive plus the encoder, decoder and
//! SDF networks at toy sizes, each on seeded random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bsp::{BspConfig, ParametricState};
use crate::error::{Error, Result};
use crate::gdo::{
    build_tet_grid, deform_on_tape, gdo_forward, loss_deform, loss_surf, surface_vertex_samples,
    Deformation, SdfNetwork, SurfaceSamples,
};
use crate::geometry::Point3;
use crate::tensor::{
    finite_diff_check, finite_diff_check_params, GradCheckReport, Mlp, ParamStore, Tape, Tensor,
    Var,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Tolerance for the path through deformation, extraction and sampling.
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

/// Outcome of one named check over all its seeds.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub seeds: u64,
    /// Worst relative error the central difference resolves.
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            tolerance,
            seeds: 0,
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
            passed: true,
        }
    }

    fn absorb(&mut self, report: &GradCheckReport) {
        self.seeds += 1;
        self.max_rel_error = self.max_rel_error.max(report.max_resolved_rel_error());
        self.checked += report.checked;
        self.skipped += report.skipped;
        self.passed &= report.passed(self.tolerance);
    }
}

type Body = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-half..half),
                rng.gen_range(-half..half),
                rng.gen_range(-half..half),
            ]
        })
        .collect()
}

/// `sum(w * y)` with fixed random weights.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let [r, c] = tape.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(random(&mut rng, r, c))?;
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn primitive(
    name: &str,
    shape: [usize; 2],
    seeds: u64,
    build: impl Fn(&mut ChaCha8Rng) -> Body,
) -> CheckResult {
    let mut out = CheckResult::new(name, TOLERANCE);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random(&mut rng, shape[0], shape[1]);
        let body = build(&mut rng);
        let report = finite_diff_check(
            |t, x| {
                let y = body(t, x)?;
                weighted_sum(t, y, seed)
            },
            &input,
            STEP,
        );
        out.absorb(&report);
    }
    out
}

fn with_constant(
    rows: usize,
    cols: usize,
    f: fn(&mut Tape, Var, Var) -> Result<Var>,
) -> impl Fn(&mut ChaCha8Rng) -> Body {
    move |rng| {
        let c = random(rng, rows, cols);
        Box::new(move |t, x| {
            let c = t.constant(c.clone())?;
            f(t, x, c)
        })
    }
}

fn primitives(seeds: u64) -> Vec<CheckResult> {
    let unary = |name: &str, shape, f: fn(&mut Tape, Var) -> Result<Var>| {
        primitive(name, shape, seeds, move |_| Box::new(f))
    };
    vec![
        primitive(
            "matmul (lhs)",
            [4, 3],
            seeds,
            with_constant(3, 5, |t, x, c| t.matmul(x, c)),
        ),
        primitive(
            "matmul (rhs)",
            [3, 5],
            seeds,
            with_constant(4, 3, |t, x, c| t.matmul(c, x)),
        ),
        primitive(
            "matmul_nt (lhs)",
            [4, 3],
            seeds,
            with_constant(5, 3, |t, x, c| t.matmul_nt(x, c)),
        ),
        primitive(
            "matmul_nt (rhs)",
            [5, 3],
            seeds,
            with_constant(4, 3, |t, x, c| t.matmul_nt(c, x)),
        ),
        primitive(
            "add",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| t.add(c, x)),
        ),
        primitive(
            "sub (lhs)",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| t.sub(x, c)),
        ),
        primitive(
            "sub (rhs)",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| t.sub(c, x)),
        ),
        primitive(
            "mul",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| t.mul(x, c)),
        ),
        primitive(
            "div (numerator)",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| {
                let d = t.offset(c, 2.5)?;
                t.div(x, d)
            }),
        ),
        primitive(
            "div (denominator)",
            [3, 4],
            seeds,
            with_constant(3, 4, |t, x, c| {
                let d = t.offset(x, 2.5)?;
                t.div(c, d)
            }),
        ),
        primitive(
            "add_row (matrix)",
            [5, 4],
            seeds,
            with_constant(1, 4, |t, x, c| t.add_row(x, c)),
        ),
        primitive(
            "add_row (row)",
            [1, 4],
            seeds,
            with_constant(5, 4, |t, x, c| t.add_row(c, x)),
        ),
        primitive(
            "mul_col (matrix)",
            [5, 3],
            seeds,
            with_constant(5, 1, |t, x, c| t.mul_col(x, c)),
        ),
        primitive(
            "mul_col (column)",
            [5, 1],
            seeds,
            with_constant(5, 3, |t, x, c| t.mul_col(c, x)),
        ),
        unary("scale", [3, 3], |t, x| t.scale(x, -1.7)),
        unary("offset", [3, 3], |t, x| t.offset(x, 0.3)),
        unary("leaky_relu", [4, 4], |t, x| t.leaky_relu(x, 0.01)),
        unary("abs", [4, 4], |t, x| t.abs(x)),
        unary("clamp_min", [4, 4], |t, x| t.clamp_min(x, 0.2)),
        unary("recip", [3, 3], |t, x| {
            let y = t.offset(x, 2.0)?;
            t.recip(y)
        }),
        unary("row_norm", [5, 3], |t, x| t.row_norm(x)),
        unary("softmax_rows", [4, 5], |t, x| t.softmax_rows(x)),
        unary("softmax_groups", [12, 3], |t, x| t.softmax_groups(x, 4)),
        unary("segment_sum", [12, 2], |t, x| t.segment_sum(x, 3)),
        unary("mean_rows", [6, 3], |t, x| t.mean_rows(x)),
        unary("sum", [3, 3], |t, x| t.sum(x)),
        unary("mean", [3, 3], |t, x| t.mean(x)),
        unary("reshape", [4, 6], |t, x| t.reshape(x, 8, 3)),
        unary("gather_rows", [5, 3], |t, x| {
            t.gather_rows(x, vec![4, 0, 0, 2, 4, 4])
        }),
        primitive(
            "concat_rows",
            [3, 2],
            seeds,
            with_constant(2, 2, |t, x, c| t.concat_rows(&[c, x, x])),
        ),
        primitive(
            "concat_cols",
            [3, 2],
            seeds,
            with_constant(3, 4, |t, x, c| t.concat_cols(&[x, c, x])),
        ),
    ]
}

fn toy_bsp(k: usize) -> BspConfig {
    BspConfig {
        feature_dim: 8,
        k,
        patch_size: 4,
        pool_size: 256,
        condition_tokens: 2,
    }
}

fn random_sphere(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let p: Point3 = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-9);
            p.map(|c| radius * c / len)
        })
        .collect()
}

fn networks(seeds: u64) -> Result<Vec<CheckResult>> {
    let mut mlp = CheckResult::new("mlp parameters", TOLERANCE);
    let mut phi = CheckResult::new("encoder parameters", TOLERANCE);
    let mut psi = CheckResult::new("decoder parameters", TOLERANCE);
    let mut g_input = CheckResult::new("sdf spatial gradient", TOLERANCE);
    let mut g_params = CheckResult::new("sdf parameters through deformation", TOLERANCE);
    let mut end_to_end = CheckResult::new("grid deformation end to end", END_TO_END_TOLERANCE);
    let grid = build_tet_grid(4)?;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        let mut store = ParamStore::new();
        let net = Mlp::new(&mut store, "mlp", &[3, 8, 2], &mut rng);
        let x = random(&mut rng, 6, 3);
        mlp.absorb(&finite_diff_check_params(
            &store,
            |t, p| {
                let x = t.constant(x.clone())?;
                let y = net.forward(t, p, x)?;
                weighted_sum(t, y, seed)
            },
            STEP,
            None,
        ));

        let mut store = ParamStore::new();
        let state = ParametricState::new(&mut store, toy_bsp(8), &mut rng)?;
        let q = random_points(&mut rng, 16, 0.45);
        phi.absorb(&finite_diff_check_params(
            &store,
            |t, p| {
                let out = state.phi_forward(t, p, &q)?;
                weighted_sum(t, out.features, seed)
            },
            STEP,
            None,
        ));

        let mut store = ParamStore::new();
        let state = ParametricState::new(&mut store, toy_bsp(4), &mut rng)?;
        let q = random_points(&mut rng, 4, 0.45);
        psi.absorb(&finite_diff_check_params(
            &store,
            |t, p| {
                let d = state.densify(t, p, &q)?;
                weighted_sum(t, d.s, seed)
            },
            STEP,
            None,
        ));

        let mut store = ParamStore::new();
        let sdf = SdfNetwork::new(&mut store, "g", 16, 2, 0.3, &mut rng);
        let x = random_points(&mut rng, 8, 0.5);
        let input = Tensor::new(8, 3, x.iter().flatten().copied().collect());
        g_input.absorb(&finite_diff_check(
            |t, xv| {
                let p = t.bind(&store)?;
                let (y, _) = sdf.values_at(t, &p, xv)?;
                weighted_sum(t, y, seed)
            },
            &input,
            STEP,
        ));
        g_params.absorb(&finite_diff_check_params(
            &store,
            |t, p| {
                let e = sdf.eval_and_grad(t, p, &x)?;
                let moved = deform_on_tape(t, &x, e.values, e.gradients)?;
                weighted_sum(t, moved, seed)
            },
            STEP,
            None,
        ));

        let target = random_sphere(&mut rng, 40, 0.33);
        let sample_seed = 2000 + seed;
        end_to_end.absorb(&finite_diff_check_params(
            &store,
            |t, p| {
                let fwd = gdo_forward(t, p, &sdf, &grid, Deformation::Gradient)?;
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                let vbar =
                    surface_vertex_samples(t, &fwd, SurfaceSamples::Resampled(64), &mut rng)?
                        .ok_or_else(|| Error::Reconstruction("empty surface".into()))?;
                let ls = loss_surf(t, fwd.values)?;
                let ls = t.scale(ls, 0.01)?;
                let ld = loss_deform(t, vbar, &target)?;
                t.add(ls, ld)
            },
            STEP,
            None,
        ));
    }
    Ok(vec![mlp, phi, psi, g_input, g_params, end_to_end])
}

/// Runs every check over `seeds` seeds.
pub fn gradient_suite(seeds: u64) -> Result<Vec<CheckResult>> {
    let mut out = primitives(seeds);
    out.extend(networks(seeds)?);
    Ok(out)
}
