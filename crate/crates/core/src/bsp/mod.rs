//! Learned sphere parameterization that densifies a sparse cloud.
//!
//! The encoder ([`CanonicalMapping`]) maps every input point to a code on
//! the unit sphere using k-nearest-neighbour vector attention. Around each
//! code a patch of sphere samples is gathered, and the decoder
//! ([`InverseMapping`]) maps every patch point back to 3D, conditioned on a
//! pooled shape descriptor. The decoded points form the dense cloud `S`.

mod decoder;
mod encoder;
mod loss;
mod patches;

pub use decoder::InverseMapping;
pub use encoder::{
    sphere_project, sphere_project_point, CanonicalMapping, PhiOutput, PROJECTION_EPS,
};
pub use loss::{chamfer_sq, loss_para};
pub use patches::Patches;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{fibonacci_sphere, KdTree, Point3, PointCloud};
use crate::tensor::{ParamStore, Tape, Var};

/// Architecture and sampling sizes of the parameterization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BspConfig {
    /// Feature width `d`.
    pub feature_dim: usize,
    /// Neighbours per point in the encoder attention, the point included.
    pub k: usize,
    /// Points per patch, the centre code included.
    pub patch_size: usize,
    /// Fibonacci samples patches are drawn from.
    pub pool_size: usize,
    /// Rows of the decoder's global condition.
    pub condition_tokens: usize,
}

impl Default for BspConfig {
    fn default() -> Self {
        BspConfig {
            feature_dim: 32,
            k: 8,
            patch_size: 10,
            pool_size: 2048,
            condition_tokens: 8,
        }
    }
}

/// Encoder, decoder and the sphere sample pool.
#[derive(Clone, Debug)]
pub struct ParametricState {
    pub config: BspConfig,
    pub encoder: CanonicalMapping,
    pub decoder: InverseMapping,
    pool: PointCloud,
    pool_tree: KdTree,
}

impl ParametricState {
    /// Registers all encoder and decoder parameters under `bsp.` in `store`.
    pub fn new(store: &mut ParamStore, config: BspConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.k == 0 || config.patch_size == 0 || config.feature_dim == 0 {
            return Err(Error::invalid(
                "k, patch_size and feature_dim must be positive",
            ));
        }
        if config.patch_size > config.pool_size {
            return Err(Error::invalid(format!(
                "patch_size {} exceeds sphere pool size {}",
                config.patch_size, config.pool_size
            )));
        }
        let encoder = CanonicalMapping::new(store, "bsp.enc", config.feature_dim, config.k, rng);
        let decoder = InverseMapping::new(
            store,
            "bsp.dec",
            config.feature_dim,
            config.condition_tokens,
            rng,
        );
        let pool = fibonacci_sphere(config.pool_size);
        let pool_tree = KdTree::new(&pool.points);
        Ok(ParametricState {
            config,
            encoder,
            decoder,
            pool,
            pool_tree,
        })
    }

    pub fn sphere_pool(&self) -> &PointCloud {
        &self.pool
    }

    /// Features and sphere codes for `q`.
    pub fn phi_forward(&self, tape: &mut Tape, params: &[Var], q: &[Point3]) -> Result<PhiOutput> {
        self.encoder.forward(tape, params, q)
    }

    /// One patch per code: the code followed by its `patch_size - 1`
    /// nearest pool samples.
    pub fn sample_patches(&self, tape: &mut Tape, codes: Var) -> Result<Patches> {
        patches::sample(
            tape,
            codes,
            &self.pool,
            &self.pool_tree,
            self.config.patch_size,
        )
    }

    /// Decodes every patch point to 3D; rows follow patch order.
    pub fn psi_forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        patches: &Patches,
        features: Var,
    ) -> Result<Var> {
        self.decoder.forward(tape, params, patches.points, features)
    }

    /// Full densification `Q -> S` on the tape.
    pub fn densify(&self, tape: &mut Tape, params: &[Var], q: &[Point3]) -> Result<Densified> {
        let phi = self.phi_forward(tape, params, q)?;
        let patches = self.sample_patches(tape, phi.codes)?;
        let s = self.psi_forward(tape, params, &patches, phi.features)?;
        Ok(Densified { phi, patches, s })
    }
}

/// Everything [`ParametricState::densify`] records.
#[derive(Clone, Debug)]
pub struct Densified {
    pub phi: PhiOutput,
    pub patches: Patches,
    /// Decoded cloud `[N * patch_size, 3]`.
    pub s: Var,
}
