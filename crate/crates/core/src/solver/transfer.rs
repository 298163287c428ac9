use super::{assembly, Discretization, FieldState};
use crate::error::Result;
use crate::geometry::Point;
use crate::linalg::LinearSolverKind;
use crate::model::HistoryField;

/// Moves a state from `old` to the refined discretization `new`: fields
/// by L² projection (exact for nested spaces), history by injection from
/// the nearest old quadrature point of the containing old leaf.
pub fn transfer_state(state: &FieldState, old: &Discretization, new: &Discretization) -> Result<FieldState> {
    let dim = new.dim();
    let old_mesh = old.mesh();
    let mass_weights: Vec<f64> = new.points().map(|q| q.weight).collect();
    let zeros = vec![0.0; mass_weights.len()];
    let mass = assembly::scalar_matrix(new, &mass_weights, &zeros, None);
    let factor = new.scalar_solver(LinearSolverKind::default())?.factorize(&mass)?;

    let old_leaf_pos = |x: &Point| {
        let leaf = old_mesh.locate(x);
        old_mesh.leaves().binary_search(&leaf).expect("located cell is a leaf")
    };
    let project = |coeffs: &[f64]| -> Result<Vec<f64>> {
        let values = assembly::map_points(new, |pos, _, _| {
            new.leaf_points(pos)
                .iter()
                .map(|q| {
                    let leaf = old_mesh.leaves()[old_leaf_pos(&q.x)];
                    q.weight * old_mesh.evaluate_on_leaf(leaf, coeffs, &q.x).0
                })
                .collect()
        });
        factor.solve(&assembly::scalar_load(new, &values))
    };
    let project_vector = |coeffs: &[f64]| -> Result<Vec<f64>> {
        let nold = old_mesh.ndof();
        let mut out = vec![0.0; new.mesh().ndof() * dim];
        for c in 0..dim {
            let component: Vec<f64> = (0..nold).map(|d| coeffs[d * dim + c]).collect();
            for (d, v) in project(&component)?.into_iter().enumerate() {
                out[d * dim + c] = v;
            }
        }
        Ok(out)
    };

    let displacement = project_vector(&state.displacement)?;
    let phase = project(&state.phase)?;
    let velocity = state.velocity.as_deref().map(project_vector).transpose()?;
    let acceleration = state.acceleration.as_deref().map(project_vector).transpose()?;

    let history = assembly::map_points(new, |pos, _, _| {
        new.leaf_points(pos)
            .iter()
            .map(|q| {
                let opos = old_leaf_pos(&q.x);
                let off = old.point_offset(opos);
                let nearest = old
                    .leaf_points(opos)
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let d: f64 = (0..3).map(|a| (p.x[a] - q.x[a]).powi(2)).sum();
                        (d, k)
                    })
                    .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
                    .1;
                state.history.values.get(off + nearest).copied().unwrap_or(0.0)
            })
            .collect()
    });
    Ok(FieldState { displacement, phase, history: HistoryField { values: history }, velocity, acceleration })
}
