//! Synthetic grouped counts with a known latent surface.
//!
//! The first dimension is age `a`, the second period `t` measured from its
//! first coordinate, the third week of year `w`:
//!
//! ```text
//! η(a, t, w) = −9.5 + 0.09·a − 0.012·t + 0.15·cos(2πw/52)
//! e(a)       = 10⁵·exp(−½((a − 40)/30)²)
//! ```
//!
//! Fine counts are Poisson(e·exp(η)) draws from a ChaCha8 stream seeded with
//! the user seed, taken in array order, then summed into groups.

use std::path::Path;

use pclm::{aggregate, build_composition, NdArray};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::data::{write_grid, Scale};
use crate::error::{CliError, Result};
use crate::layout::Layout;

pub const COUNTS_FILE: &str = "counts.csv";
pub const FINE_COUNTS_FILE: &str = "fine_counts.csv";
pub const EXPOSURES_FILE: &str = "exposures.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const GROUPING_FILE: &str = "grouping.txt";

#[derive(Debug, Clone)]
pub struct Simulation {
    pub layout: Layout,
    pub eta_true: NdArray,
    pub exposures: NdArray,
    pub fine_counts: NdArray,
    pub counts: NdArray,
}

pub fn true_log_rate(coords: &[i64], period_origin: i64) -> f64 {
    let mut eta = -9.5 + 0.09 * coords[0] as f64;
    if let Some(&t) = coords.get(1) {
        eta -= 0.012 * (t - period_origin) as f64;
    }
    if let Some(&w) = coords.get(2) {
        eta += 0.15 * (2.0 * std::f64::consts::PI * w as f64 / 52.0).cos();
    }
    eta
}

pub fn true_exposure(age: i64) -> f64 {
    let z = (age as f64 - 40.0) / 30.0;
    1e5 * (-0.5 * z * z).exp()
}

fn fine_coordinates(layout: &Layout, idx: &[usize]) -> Vec<i64> {
    idx.iter().zip(&layout.dims).map(|(&i, d)| d.first + i as i64).collect()
}

/// Sum fine-resolution values into the layout's groups.
pub fn aggregate_to_groups(layout: &Layout, fine: &NdArray) -> Result<NdArray> {
    let comps =
        layout.dims.iter().map(|d| build_composition(&d.grouping(), d.n_fine())).collect::<pclm::Result<Vec<_>>>()?;
    Ok(aggregate(fine, &comps)?)
}

pub fn simulate(layout: &Layout, seed: u64) -> Result<Simulation> {
    if layout.ndim() > 3 {
        return Err(CliError::config(format!(
            "the synthetic surface covers at most three dimensions (age, period, week), got {}",
            layout.ndim()
        )));
    }
    let origin = layout.dims.get(1).map_or(0, |d| d.first);
    let dims = layout.fine_dims();
    let eta_true = NdArray::from_fn(dims.clone(), |idx| true_log_rate(&fine_coordinates(layout, idx), origin))?;
    let exposures = NdArray::from_fn(dims.clone(), |idx| true_exposure(layout.dims[0].first + idx[0] as i64))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(eta_true.len());
    for (eta, e) in eta_true.data().iter().zip(exposures.data()) {
        let poisson = Poisson::new(e * eta.exp()).map_err(|err| CliError::config(format!("poisson mean: {err}")))?;
        draws.push(poisson.sample(&mut rng));
    }
    let fine_counts = NdArray::new(dims, draws)?;
    let counts = aggregate_to_groups(layout, &fine_counts)?;
    Ok(Simulation { layout: layout.clone(), eta_true, exposures, fine_counts, counts })
}

impl Simulation {
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let grouping = out_dir.join(GROUPING_FILE);
        std::fs::write(&grouping, self.layout.to_text()).map_err(|e| CliError::io(&grouping, e))?;
        let l = &self.layout;
        write_grid(&out_dir.join(COUNTS_FILE), l, Scale::Grouped, &[("count", &self.counts)])?;
        write_grid(&out_dir.join(FINE_COUNTS_FILE), l, Scale::Fine, &[("count", &self.fine_counts)])?;
        write_grid(&out_dir.join(EXPOSURES_FILE), l, Scale::Fine, &[("exposure", &self.exposures)])?;
        write_grid(&out_dir.join(TRUTH_FILE), l, Scale::Fine, &[("eta_true", &self.eta_true)])
    }
}
