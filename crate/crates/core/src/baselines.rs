//! Comparison methods: random-hyperplane LSH and CCA-initialised ITQ.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{zero_center, CenteringInfo, DataMatrix};
use crate::error::{ensure, Result};
use crate::itq::itq_train;
use crate::model::{HashModel, Hyperparams, Method};
use crate::preprocess::{cca_fit, project, LinearProjection, Ridge};

/// Random-hyperplane LSH over `d`-dimensional centered input: `c` i.i.d.
/// standard Gaussian directions, thresholded at zero.
pub fn lsh_fit(d: usize, bits: usize, seed: u64) -> Result<HashModel> {
    ensure!(d >= 1 && bits >= 1, InvalidArgument, "LSH needs d >= 1 and c >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = DMatrix::from_fn(d, bits, |_, _| StandardNormal.sample(&mut rng));
    HashModel::new(
        Method::Lsh,
        CenteringInfo::zeros(d),
        LinearProjection::identity(d),
        projection,
        Hyperparams {
            seed,
            ..Hyperparams::default()
        },
    )
}

/// CCA-ITQ: centers both views, projects the target view onto its top-`c`
/// canonical directions (fit on the correspondence pairs only) and learns an
/// ITQ rotation there.
pub fn cca_itq_fit(x_t: &DataMatrix, x_sc: &DataMatrix, bits: usize, iters: usize, seed: u64) -> Result<HashModel> {
    ensure!(
        x_t.rows() == x_sc.rows(),
        Dimension,
        "CCA-ITQ needs aligned correspondences ({} vs {} rows)",
        x_t.rows(),
        x_sc.rows()
    );
    let (t_centered, t_info) = zero_center(x_t)?;
    let (s_centered, _) = zero_center(x_sc)?;
    let cca = cca_fit(&t_centered, &s_centered, bits, Ridge::Auto)?;
    let reduced = project(&t_centered, &cca.left)?;
    let fit = itq_train(&reduced, bits, iters, seed)?;
    HashModel::new(
        Method::CcaItq,
        t_info,
        cca.left,
        fit.rotation.into_inner(),
        Hyperparams {
            iters: iters as u32,
            seed,
            ..Hyperparams::default()
        },
    )
}
