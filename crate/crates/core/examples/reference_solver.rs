//! Finite-difference reference in both regimes, checked against the
//! diffusion limit and for mass conservation.

use rte_apnn::physics::{limit_solution_1d, InitialCondition1D};
use rte_apnn::quadrature::VelocitySet;
use rte_apnn::reference::{relative_l2, solve_kinetic_fd_1d, total_mass, Grid};

fn main() -> rte_apnn::Result<()> {
    let ic = InitialCondition1D::cosine_gaussian();
    let vel = VelocitySet::slab(16)?;
    let series = ic.density_series(&vel)?;
    let t = 0.01;
    for eps in [1.0, 1e-2, 1e-4] {
        let grid = Grid::with_default_step(200, 1, eps, t)?;
        let sol = solve_kinetic_fd_1d(eps, &grid, &ic, &vel, &[0.0, t])?;
        let limit: Vec<f64> = sol.x.iter().map(|&x| limit_solution_1d(t, x, 0.0, &series).0).collect();
        let rho = &sol.snapshots[1].rho;
        let m0 = total_mass(&sol.snapshots[0].rho, grid.dx());
        let m1 = total_mass(rho, grid.dx());
        println!(
            "eps {eps:.0e}: dt {:.3e}, distance to diffusion limit {:.3e}, mass drift {:.1e}",
            grid.dt,
            relative_l2(rho, &limit)?,
            ((m1 - m0) / m0).abs()
        );
    }
    Ok(())
}
