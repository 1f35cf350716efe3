//! Damped elastic rod with clamped base, driven by external point forces.
//!
//! The rod is a chain of `n_elements + 1` lumped-mass nodes. Internal forces come
//! from two conservative potentials:
//!
//! - axial springs: `½·EA·l₀·ε²` per element, with `ε = |e|/l₀ − 1`;
//! - discrete bending: `EI/(2·l̄)·|t̂ₖ − t̂ₖ₋₁|²` at each interior node, where
//!   `t̂` are unit edge tangents and `l̄` the mean adjacent rest length. For small
//!   turning angles θ this is `½·EI·θ²/l̄`, the continuum bending energy.
//!
//! Viscous damping acts per node as `−γ·m·v`. Time stepping is velocity Verlet
//! with the damping factor `exp(−γh/2)` applied on both sides of each substep,
//! so the conservative part is symplectic and the dissipative part is exact.
//! Element director frames are parallel-transported along the tangents once per
//! control step; twist is carried but inert.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Material and discretisation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RodParams {
    pub length: f64,
    pub radius: f64,
    pub density: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    /// Viscous damping rate, 1/s.
    pub damping_coefficient: f64,
    pub n_elements: usize,
    pub gravity: [f64; 3],
    /// Position clamp on node 0. Disabled only by free-body test variants.
    pub clamp_base: bool,
}

impl Default for RodParams {
    fn default() -> Self {
        let youngs_modulus = 1e7;
        Self {
            length: 1.0,
            radius: 0.025,
            density: 1000.0,
            youngs_modulus,
            shear_modulus: youngs_modulus / 3.0,
            damping_coefficient: 10.0,
            n_elements: 12,
            gravity: [0.0; 3],
            clamp_base: true,
        }
    }
}

impl RodParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(Error::config(format!(
                "rod needs at least 2 elements, got {}",
                self.n_elements
            )));
        }
        let positive = [
            ("length", self.length),
            ("radius", self.radius),
            ("density", self.density),
            ("youngs_modulus", self.youngs_modulus),
            ("shear_modulus", self.shear_modulus),
            ("damping_coefficient", self.damping_coefficient),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("rod.{name} must be finite and > 0, got {value}")));
            }
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("rod.gravity must be finite"));
        }
        Ok(())
    }

    pub fn cross_section_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn second_moment_of_area(&self) -> f64 {
        std::f64::consts::PI * self.radius.powi(4) / 4.0
    }

    pub fn mid_span_node(&self) -> usize {
        self.n_elements / 2
    }
}

/// Kinematic state of the rod.
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub node_positions: Vec<Vec3>,
    pub node_velocities: Vec<Vec3>,
    /// Per-element material frame; the third director tracks the edge tangent.
    pub element_directors: Vec<UnitQuaternion<f64>>,
    pub element_rest_lengths: Vec<f64>,
    pub sim_time: f64,
    pub control_steps: u64,
    base_position: Vec3,
}

impl RodState {
    pub fn tip_position(&self) -> Vec3 {
        *self
            .node_positions
            .last()
            .expect("rod state always holds at least three nodes")
    }

    pub fn base_position(&self) -> Vec3 {
        self.base_position
    }

    pub fn n_nodes(&self) -> usize {
        self.node_positions.len()
    }

    /// Largest deviation of any director frame from orthonormality.
    pub fn director_orthonormality_error(&self) -> f64 {
        self.element_directors
            .iter()
            .map(|q| {
                let m = q.to_rotation_matrix().into_inner();
                (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max()
            })
            .fold(0.0, f64::max)
    }

    fn all_finite(&self) -> bool {
        self.node_positions
            .iter()
            .chain(self.node_velocities.iter())
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

/// Policy-produced point loads at the forcing nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalLoadSet {
    pub forcing_node_indices: Vec<usize>,
    pub forces: Vec<Vec3>,
}

impl ExternalLoadSet {
    pub fn new(forcing_node_indices: Vec<usize>, forces: Vec<Vec3>, n_elements: usize) -> Result<Self> {
        if forcing_node_indices.len() != forces.len() {
            return Err(Error::Dimension {
                context: "external load set",
                expected: forcing_node_indices.len(),
                actual: forces.len(),
            });
        }
        let increasing = forcing_node_indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = forcing_node_indices.iter().all(|&i| (1..=n_elements).contains(&i));
        if !increasing || !in_range {
            return Err(Error::config(format!(
                "forcing nodes {forcing_node_indices:?} must be strictly increasing within [1, {n_elements}]"
            )));
        }
        Ok(Self {
            forcing_node_indices,
            forces,
        })
    }

    /// Adds these loads into a per-node force array.
    pub fn accumulate_into(&self, node_forces: &mut [Vec3]) {
        for (&node, force) in self.forcing_node_indices.iter().zip(&self.forces) {
            node_forces[node] += force;
        }
    }
}

/// Forcing points: the last node of each section.
///
/// Section `k` (1-based) ends at node `ceil(k·n_elements / n_sections)`, which
/// reduces to `k·(n_elements/n_sections)` whenever the division is exact. The
/// final index is always the tip.
pub fn forcing_nodes(n_sections: usize, n_elements: usize) -> Result<Vec<usize>> {
    if n_sections == 0 || n_sections > n_elements {
        return Err(Error::config(format!(
            "cannot place {n_sections} forcing points on a rod of {n_elements} elements"
        )));
    }
    Ok((1..=n_sections)
        .map(|k| (k * n_elements).div_ceil(n_sections))
        .collect())
}

/// Validated parameters plus derived per-node quantities.
#[derive(Debug, Clone)]
pub struct RodModel {
    params: RodParams,
    node_mass: Vec<f64>,
    axial_stiffness: f64,
    bending_stiffness: f64,
}

impl RodModel {
    pub fn new(params: RodParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_elements;
        let element_mass = params.density * params.cross_section_area() * params.length / n as f64;
        let mut node_mass = vec![0.0; n + 1];
        for e in 0..n {
            node_mass[e] += 0.5 * element_mass;
            node_mass[e + 1] += 0.5 * element_mass;
        }
        Ok(Self {
            axial_stiffness: params.youngs_modulus * params.cross_section_area(),
            bending_stiffness: params.youngs_modulus * params.second_moment_of_area(),
            params,
            node_mass,
        })
    }

    pub fn params(&self) -> &RodParams {
        &self.params
    }

    pub fn node_masses(&self) -> &[f64] {
        &self.node_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.node_mass.iter().sum()
    }

    /// Axial stiffness EA, N.
    pub fn axial_stiffness(&self) -> f64 {
        self.axial_stiffness
    }

    /// Bending stiffness EI, N·m².
    pub fn bending_stiffness(&self) -> f64 {
        self.bending_stiffness
    }

    /// Straight, unstressed rod at rest from `base` along `direction`.
    pub fn init_straight_rod(&self, base: Vec3, direction: Vec3) -> Result<RodState> {
        if !base.iter().all(|c| c.is_finite()) || (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "rod direction must be a unit vector (norm {}), base finite",
                direction.norm()
            )));
        }
        let n = self.params.n_elements;
        let rest = self.params.length / n as f64;
        let node_positions = (0..=n)
            .map(|k| base + direction * (self.params.length * k as f64 / n as f64))
            .collect();
        let frame = frame_aligned_with(&direction);
        Ok(RodState {
            node_positions,
            node_velocities: vec![Vec3::zeros(); n + 1],
            element_directors: vec![frame; n],
            element_rest_lengths: vec![rest; n],
            sim_time: 0.0,
            control_steps: 0,
            base_position: base,
        })
    }

    /// Advances `state` by exactly `control_dt` using `n_substeps` equal substeps.
    ///
    /// `external_forces` holds one force per node and is held constant over the
    /// interval.
    pub fn step_physics(
        &self,
        state: &mut RodState,
        external_forces: &[Vec3],
        control_dt: f64,
        n_substeps: usize,
    ) -> Result<()> {
        let n_nodes = self.node_mass.len();
        if state.n_nodes() != n_nodes {
            return Err(Error::Dimension {
                context: "rod state nodes",
                expected: n_nodes,
                actual: state.n_nodes(),
            });
        }
        if external_forces.len() != n_nodes {
            return Err(Error::Dimension {
                context: "external node forces",
                expected: n_nodes,
                actual: external_forces.len(),
            });
        }
        if !(control_dt > 0.0) || n_substeps == 0 {
            return Err(Error::config(format!(
                "control_dt must be > 0 and n_substeps >= 1 (got {control_dt}, {n_substeps})"
            )));
        }

        let h = control_dt / n_substeps as f64;
        let half_damp = (-0.5 * self.params.damping_coefficient * h).exp();
        let gravity = Vec3::from(self.params.gravity);
        let mut ws = Workspace::new(n_nodes);
        let old_tangents: Vec<Vec3> = edge_tangents(&state.node_positions);

        // Constant part of the load: external + gravity.
        let applied: Vec<Vec3> = external_forces
            .iter()
            .zip(&self.node_mass)
            .map(|(f, &m)| f + gravity * m)
            .collect();

        self.total_force(state, &applied, &mut ws);
        for _ in 0..n_substeps {
            self.half_kick(state, &ws.force, h, half_damp, true);
            for (x, v) in state.node_positions.iter_mut().zip(&state.node_velocities) {
                *x += v * h;
            }
            self.enforce_clamp(state);
            self.total_force(state, &applied, &mut ws);
            self.half_kick(state, &ws.force, h, half_damp, false);
        }

        state.sim_time += control_dt;
        state.control_steps += 1;
        if !state.all_finite() {
            return Err(Error::Simulation {
                step: state.control_steps,
                detail: "non-finite node position or velocity".into(),
            });
        }
        transport_directors(state, &old_tangents);
        Ok(())
    }

    fn half_kick(&self, state: &mut RodState, force: &[Vec3], h: f64, half_damp: f64, damp_first: bool) {
        for ((v, f), &m) in state.node_velocities.iter_mut().zip(force).zip(&self.node_mass) {
            if damp_first {
                *v *= half_damp;
                *v += f * (0.5 * h / m);
            } else {
                *v += f * (0.5 * h / m);
                *v *= half_damp;
            }
        }
        self.enforce_clamp(state);
    }

    fn enforce_clamp(&self, state: &mut RodState) {
        if self.params.clamp_base {
            state.node_positions[0] = state.base_position;
            state.node_velocities[0] = Vec3::zeros();
        }
    }

    fn total_force(&self, state: &RodState, applied: &[Vec3], ws: &mut Workspace) {
        ws.force.copy_from_slice(applied);
        self.accumulate_internal_forces(&state.node_positions, &state.element_rest_lengths, ws);
    }

    fn accumulate_internal_forces(&self, x: &[Vec3], rest: &[f64], ws: &mut Workspace) {
        let n_el = rest.len();
        for e in 0..n_el {
            let d = x[e + 1] - x[e];
            let len = d.norm();
            let t = d / len;
            ws.tangent[e] = t;
            ws.edge_len[e] = len;
            let tension = self.axial_stiffness * (len / rest[e] - 1.0);
            ws.force[e] += t * tension;
            ws.force[e + 1] -= t * tension;
        }
        for k in 1..n_el {
            let u = ws.tangent[k - 1];
            let w = ws.tangent[k];
            let coeff = self.bending_stiffness / (rest[k - 1] + rest[k]);
            let cos = u.dot(&w);
            // ga = -dE/de_{k-1}, gb = -dE/de_k, with E = coeff·|w − u|².
            let ga = (w - u * cos) * (2.0 * coeff / ws.edge_len[k - 1]);
            let gb = (u - w * cos) * (2.0 * coeff / ws.edge_len[k]);
            ws.force[k - 1] -= ga;
            ws.force[k] += ga - gb;
            ws.force[k + 1] += gb;
        }
    }

    pub fn kinetic_energy(&self, state: &RodState) -> f64 {
        state
            .node_velocities
            .iter()
            .zip(&self.node_mass)
            .map(|(v, &m)| 0.5 * m * v.norm_squared())
            .sum()
    }

    pub fn elastic_energy(&self, state: &RodState) -> f64 {
        let x = &state.node_positions;
        let rest = &state.element_rest_lengths;
        let tangents = edge_tangents(x);
        let axial: f64 = (0..rest.len())
            .map(|e| {
                let strain = (x[e + 1] - x[e]).norm() / rest[e] - 1.0;
                0.5 * self.axial_stiffness * rest[e] * strain * strain
            })
            .sum();
        let bending: f64 = (1..rest.len())
            .map(|k| {
                let coeff = self.bending_stiffness / (rest[k - 1] + rest[k]);
                coeff * (tangents[k] - tangents[k - 1]).norm_squared()
            })
            .sum();
        axial + bending
    }

    /// Kinetic plus elastic potential energy, J.
    pub fn mechanical_energy(&self, state: &RodState) -> f64 {
        self.kinetic_energy(state) + self.elastic_energy(state)
    }

    pub fn centre_of_mass(&self, state: &RodState) -> Vec3 {
        let weighted: Vec3 = state
            .node_positions
            .iter()
            .zip(&self.node_mass)
            .map(|(x, &m)| x * m)
            .sum();
        weighted / self.total_mass()
    }

    pub fn centre_of_mass_velocity(&self, state: &RodState) -> Vec3 {
        let weighted: Vec3 = state
            .node_velocities
            .iter()
            .zip(&self.node_mass)
            .map(|(v, &m)| v * m)
            .sum();
        weighted / self.total_mass()
    }
}

/// Last node position.
pub fn tip_position(state: &RodState) -> Vec3 {
    state.tip_position()
}

struct Workspace {
    force: Vec<Vec3>,
    tangent: Vec<Vec3>,
    edge_len: Vec<f64>,
}

impl Workspace {
    fn new(n_nodes: usize) -> Self {
        Self {
            force: vec![Vec3::zeros(); n_nodes],
            tangent: vec![Vec3::zeros(); n_nodes - 1],
            edge_len: vec![0.0; n_nodes - 1],
        }
    }
}

fn edge_tangents(x: &[Vec3]) -> Vec<Vec3> {
    x.windows(2).map(|w| (w[1] - w[0]).normalize()).collect()
}

/// Frame obtained from the identity by the minimal rotation taking +z onto `direction`.
fn frame_aligned_with(direction: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&Vec3::z(), direction).unwrap_or_else(|| {
        // Antiparallel: any half-turn about an axis orthogonal to z.
        UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
    })
}

fn transport_directors(state: &mut RodState, old_tangents: &[Vec3]) {
    let new_tangents = edge_tangents(&state.node_positions);
    for ((frame, old), new) in state.element_directors.iter_mut().zip(old_tangents).zip(&new_tangents) {
        if let Some(r) = UnitQuaternion::rotation_between(old, new) {
            *frame = r * *frame;
        }
        frame.renormalize();
    }
}
