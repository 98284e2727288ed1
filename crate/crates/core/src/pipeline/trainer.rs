use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{AdamSnapshot, Checkpoint};
use super::config::{Mode, TrainConfig};
use crate::bsp::{loss_para, ParametricState};
use crate::error::{Error, Result};
use crate::gdo::{
    deform_vertices, gdo_forward, loss_deform, loss_surf, marching_tetrahedra,
    surface_vertex_samples, Deformation, DeformedGrid, OffsetNetwork, ScalarField, SdfNetwork,
    TetGrid,
};
use crate::geometry::{normalize_unit_cube, Point3, PointCloud, TriangleMesh, UnitCubeTransform};
use crate::tensor::{AdamState, ParamId, ParamStore, Tape, Tensor, Var};

/// Iterations during which an empty extraction triggers a re-initialisation
/// of the SDF network.
pub const FALLBACK_WINDOW: usize = 100;

/// Loss components of one iteration. Components that were not part of the
/// objective are recorded as zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub total: f64,
    pub para: f64,
    pub surf: f64,
    pub deform: f64,
    /// Marching tetrahedra found no surface this iteration.
    pub empty: bool,
}

/// Networks of one run, all registered in the same [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model {
    pub bsp: Option<ParametricState>,
    pub sdf: SdfNetwork,
    pub offset: Option<OffsetNetwork>,
}

impl Model {
    pub fn new(store: &mut ParamStore, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bsp = match config.mode {
            Mode::SparseOnly => None,
            _ => Some(ParametricState::new(store, config.bsp(), rng)?),
        };
        let sdf = SdfNetwork::new(
            store,
            "sdf",
            config.sdf_width,
            config.sdf_depth,
            config.init_radius,
            rng,
        );
        let offset = (config.mode == Mode::OffsetAblation)
            .then(|| OffsetNetwork::new(store, "offset", config.offset_width, rng));
        Ok(Model { bsp, sdf, offset })
    }
}

/// `lambda1 * para + lambda2 * surf + deform` on the tape; absent terms
/// contribute nothing.
pub fn total_loss(
    tape: &mut Tape,
    para: Option<Var>,
    surf: Option<Var>,
    deform: Option<Var>,
    config: &TrainConfig,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(3);
    if let Some(p) = para {
        terms.push(tape.scale(p, config.lambda1)?);
    }
    if let Some(s) = surf {
        terms.push(tape.scale(s, config.lambda2)?);
    }
    if let Some(d) = deform {
        terms.push(d);
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => return tape.constant(Tensor::scalar(0.0)),
    };
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// Random stream for iteration `it`: a pure function of the seed and the
/// iteration, so resumed runs draw the same samples.
pub fn iteration_rng(seed: u64, it: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(it as u64 + 1);
    rng
}

/// Training session for one input cloud.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub model: Model,
    pub grid: TetGrid,
    pub adam: AdamState,
    pub iteration: usize,
    pub history: Vec<LossRecord>,
    /// Normalised input `Q`.
    pub input: PointCloud,
    pub transform: UnitCubeTransform,
}

impl Trainer {
    /// Normalises `cloud` into the grid domain and initialises every
    /// network from `config.seed`.
    pub fn new(cloud: &PointCloud, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let min_points = config.k.max(4);
        if cloud.len() < min_points {
            return Err(Error::invalid(format!(
                "{} input points, at least {min_points} needed",
                cloud.len()
            )));
        }
        cloud.validate()?;
        let (input, transform) = normalize_unit_cube(cloud)?;
        Self::with_normalized(input, transform, config)
    }

    fn with_normalized(
        input: PointCloud,
        transform: UnitCubeTransform,
        config: TrainConfig,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let model = Model::new(&mut store, &config, &mut rng)?;
        let grid = TetGrid::new(config.resolution)?;
        let adam = AdamState::new(&store, config.adam());
        Ok(Trainer {
            config,
            store,
            model,
            grid,
            adam,
            iteration: 0,
            history: Vec::new(),
            input,
            transform,
        })
    }

    fn bsp_trains(&self, it: usize) -> bool {
        match self.config.mode {
            Mode::Full | Mode::OffsetAblation => true,
            Mode::SparseOnly => false,
            Mode::BspFrozen => it < self.config.iterations / 2,
        }
    }

    fn gdo_trains(&self, it: usize) -> bool {
        self.config.mode != Mode::BspFrozen || it >= self.config.iterations / 2
    }

    /// Target `S` without recording gradients.
    pub fn densified(&self) -> Result<Vec<Point3>> {
        let Some(bsp) = &self.model.bsp else {
            return Ok(self.input.points.clone());
        };
        let mut tape = Tape::new();
        let p = tape.bind(&self.store)?;
        let d = bsp.densify(&mut tape, &p, &self.input.points)?;
        Ok(tape.value(d.s).to_points())
    }

    /// One optimisation step. On error nothing is modified, so the trainer
    /// still holds the last finite state.
    pub fn step(&mut self) -> Result<LossRecord> {
        let it = self.iteration;
        let mut rng = iteration_rng(self.config.seed, it);
        let mut tape = Tape::new();
        let params = tape.bind(&self.store)?;
        let q = &self.input.points;

        let mut para = None;
        let s_points = match &self.model.bsp {
            Some(bsp) if self.bsp_trains(it) || self.gdo_trains(it) => {
                let d = bsp.densify(&mut tape, &params, q)?;
                if self.bsp_trains(it) {
                    para = Some(loss_para(&mut tape, d.s, q)?);
                }
                tape.value(d.s).to_points()
            }
            _ => q.clone(),
        };

        let (mut surf, mut deform, mut empty) = (None, None, false);
        if self.gdo_trains(it) {
            let deformation = match &self.model.offset {
                Some(o) => Deformation::Offset(o),
                None => Deformation::Gradient,
            };
            let fwd = gdo_forward(&mut tape, &params, &self.model.sdf, &self.grid, deformation)?;
            surf = Some(loss_surf(&mut tape, fwd.values)?);
            empty = fwd.is_empty();
            match surface_vertex_samples(&mut tape, &fwd, self.config.surface_samples(), &mut rng)?
            {
                Some(vbar) => deform = Some(loss_deform(&mut tape, vbar, &s_points)?),
                None => warn!("iteration {it}: empty extraction, deformation loss skipped"),
            }
        }

        let total = total_loss(&mut tape, para, surf, deform, &self.config)?;
        let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        let record = LossRecord {
            total: tape.value(total).item(),
            para: value(para),
            surf: value(surf),
            deform: value(deform),
            empty,
        };
        if !record.total.is_finite() {
            return Err(Error::NonFinite(format!("total loss at iteration {it}")));
        }
        let grads = tape.backward(total)?.param_grads(&self.store);
        self.adam.step(&mut self.store, &grads)?;
        if empty && it < FALLBACK_WINDOW {
            warn!("iteration {it}: empty extraction, re-initialising the SDF network");
            self.reinitialize_sdf(&mut rng);
        }
        debug!("iteration {it}: {record:?}");
        self.iteration += 1;
        self.history.push(record);
        Ok(record)
    }

    /// Fresh sphere-shaped SDF parameters (`g(0) < 0 < g` at the domain
    /// boundary) with cleared optimiser moments.
    fn reinitialize_sdf(&mut self, rng: &mut ChaCha8Rng) {
        self.model
            .sdf
            .geometric_init(&mut self.store, self.config.init_radius, rng);
        for id in self.sdf_param_ids() {
            self.adam.m[id.index()].iter_mut().for_each(|x| *x = 0.0);
            self.adam.v[id.index()].iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn sdf_param_ids(&self) -> Vec<ParamId> {
        self.model
            .sdf
            .mlp
            .layers
            .iter()
            .flat_map(|l| std::iter::once(l.weight).chain(l.bias))
            .collect()
    }

    /// Runs until `config.iterations` steps have been taken.
    pub fn train(&mut self) -> Result<&[LossRecord]> {
        while self.iteration < self.config.iterations {
            self.step()?;
        }
        Ok(&self.history)
    }

    /// Deformed grid under the current parameters.
    pub fn deformed_grid(&self) -> Result<DeformedGrid> {
        let field = self.model.sdf.field(&self.store);
        match &self.model.offset {
            None => deform_vertices(&self.grid, &field),
            Some(off) => {
                let values = field.values(&self.grid.vertices)?;
                let mut positions = Vec::with_capacity(values.len());
                for chunk in self.grid.vertices.chunks(8192) {
                    let mut tape = Tape::new();
                    let p = tape.bind(&self.store)?;
                    let v = off.deform_on_tape(&mut tape, &p, chunk)?;
                    positions.extend(tape.value(v).to_points());
                }
                Ok(DeformedGrid { positions, values })
            }
        }
    }

    /// Final extraction in normalised coordinates.
    pub fn reconstruct_normalized(&self) -> Result<TriangleMesh> {
        let ex = marching_tetrahedra(&self.grid, &self.deformed_grid()?);
        if ex.empty {
            return Err(Error::Reconstruction(
                "the SDF has no zero crossing on the grid".into(),
            ));
        }
        Ok(ex.mesh)
    }

    /// Final extraction mapped back to the input's coordinates.
    pub fn reconstruct(&self) -> Result<TriangleMesh> {
        Ok(denormalize(self.reconstruct_normalized()?, &self.transform))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration as u64,
            transform: self.transform,
            input: self.input.points.clone(),
            params: self
                .store
                .iter()
                .map(|(_, name, t)| (name.to_string(), t.clone()))
                .collect(),
            adam: AdamSnapshot {
                t: self.adam.t,
                config: self.adam.config,
                m: self.adam.m.clone(),
                v: self.adam.v.clone(),
            },
            history: self.history.clone(),
        }
    }

    /// Restores a session from a checkpoint; the parameter layout must match
    /// the one its config builds.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let input = PointCloud::new(ckpt.input.clone());
        let mut t = Self::with_normalized(input, ckpt.transform, ckpt.config.clone())?;
        if ckpt.params.len() != t.store.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter blocks, model has {}",
                ckpt.params.len(),
                t.store.len()
            )));
        }
        for (name, value) in &ckpt.params {
            t.store
                .set(name, value.clone())
                .map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
        }
        let sizes: Vec<usize> = t.store.iter().map(|(_, _, p)| p.len()).collect();
        let fits = |slots: &[Vec<f64>]| {
            slots.len() == sizes.len() && slots.iter().zip(&sizes).all(|(s, &n)| s.len() == n)
        };
        if !fits(&ckpt.adam.m) || !fits(&ckpt.adam.v) {
            return Err(Error::Checkpoint(
                "optimizer state does not match parameters".into(),
            ));
        }
        t.adam = AdamState {
            config: ckpt.adam.config,
            t: ckpt.adam.t,
            m: ckpt.adam.m.clone(),
            v: ckpt.adam.v.clone(),
        };
        t.iteration = ckpt.iteration as usize;
        t.history = ckpt.history.clone();
        Ok(t)
    }
}

/// Maps a mesh from normalised coordinates back through `transform`.
pub fn denormalize(mut mesh: TriangleMesh, transform: &UnitCubeTransform) -> TriangleMesh {
    mesh.vertices
        .iter_mut()
        .for_each(|v| *v = transform.invert(*v));
    mesh
}

/// Deforms a grid with `field`, extracts its zero level set and maps the
/// mesh through `transform`.
pub fn reconstruct_field(
    field: &dyn ScalarField,
    resolution: usize,
    transform: &UnitCubeTransform,
) -> Result<TriangleMesh> {
    let grid = TetGrid::new(resolution)?;
    let ex = marching_tetrahedra(&grid, &deform_vertices(&grid, field)?);
    if ex.empty {
        return Err(Error::Reconstruction(
            "the field has no zero crossing on the grid".into(),
        ));
    }
    Ok(denormalize(ex.mesh, transform))
}
