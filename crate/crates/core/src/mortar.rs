//! Weak `C⁰`/`C¹` interface constraints discretized with dual multipliers,
//! degree-of-freedom classification, and the sparse null-space basis that
//! condenses the coupled system.
//!
//! Interface integrals run in the slave edge parameter over the merged
//! slave/master knot partition. Derivative-jump rows are scaled by the edge
//! derivative constant so the eliminated blocks are exactly identity.

use std::collections::BTreeMap;

use crate::dual::{build_dual, DualBasis, DualKind};
use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::model::{Edge, Interface, MultiPatchModel};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// Coupling strategies. `G`/`B` are the two-patch forms; the multi-patch
/// forms either coarsen the duals near vertices (`MG`/`MB`) and add pointwise
/// vertex constraints, or keep the original duals (`OG`/`OB`) and treat the
/// vertex-proximal multipliers by a local factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    G,
    B,
    MG,
    MB,
    OG,
    OB,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Strategy> {
        match s.to_ascii_uppercase().as_str() {
            "G" => Some(Strategy::G),
            "B" => Some(Strategy::B),
            "MG" => Some(Strategy::MG),
            "MB" => Some(Strategy::MB),
            "OG" => Some(Strategy::OG),
            "OB" => Some(Strategy::OB),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::G => "G",
            Strategy::B => "B",
            Strategy::MG => "MG",
            Strategy::MB => "MB",
            Strategy::OG => "OG",
            Strategy::OB => "OB",
        }
    }

    pub fn dual_kind(self) -> DualKind {
        match self {
            Strategy::G | Strategy::OG => DualKind::Global,
            Strategy::B | Strategy::OB => DualKind::Bezier,
            Strategy::MG => DualKind::GlobalCoarsened,
            Strategy::MB => DualKind::BezierModified,
        }
    }

    /// Coarsened strategies add pointwise vertex rows; original-dual
    /// strategies split off the vertex-proximal weak rows instead.
    pub fn is_coarsened(self) -> bool {
        matches!(self, Strategy::MG | Strategy::MB)
    }

    pub fn is_two_patch_only(self) -> bool {
        matches!(self, Strategy::G | Strategy::B)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    C0,
    C1,
}

impl Continuity {
    pub fn parse(s: &str) -> Option<Continuity> {
        match s.to_ascii_lowercase().as_str() {
            "c0" => Some(Continuity::C0),
            "c1" => Some(Continuity::C1),
            _ => None,
        }
    }
}

/// Which constraint family a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `∫ [u] N̂_i = 0`
    ValueJump,
    /// `(1/c) ∫ [∂u/∂d_s] N̂_i = 0`
    DerivativeJump,
}

#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub family: Family,
    /// Source interface; `None` for pointwise vertex rows.
    pub interface: Option<usize>,
    pub dual_index: usize,
    /// Rows near interior vertices handled by the local factorization.
    pub vertex_block: bool,
    /// Slave dof eliminated through this row's unit entry.
    pub eliminates: Option<usize>,
    /// `(global dof, coefficient)` sorted by dof.
    pub entries: Vec<(usize, f64)>,
}

/// Per-interface classification of the degrees of freedom (the two-patch
/// types; vertex-adjacent dofs are collected globally).
#[derive(Debug, Clone, Default)]
pub struct InterfaceClassification {
    /// Slave column one away from the interface, eliminated by derivative rows.
    pub slave_derivative_layer: Vec<usize>,
    /// Slave column on the interface, eliminated by value rows.
    pub slave_edge_layer: Vec<usize>,
    /// Master column on the interface.
    pub master_edge_layer: Vec<usize>,
    /// Master column one away from the interface.
    pub master_derivative_layer: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct DofClassification {
    pub per_interface: Vec<InterfaceClassification>,
    /// Vertex-adjacent dofs excluded from the interface types.
    pub vertex_adjacent: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub n_dofs: usize,
    pub strategy: Strategy,
    pub continuity: Continuity,
    pub rows: Vec<ConstraintRow>,
    /// Edge scaling constant `c` per interface.
    pub scalings: Vec<f64>,
    pub classification: DofClassification,
    /// Dofs eliminated by the strong boundary conditions (no constraint
    /// entries reference them; they receive no null-space column).
    pub boundary_dofs: Vec<bool>,
}

impl ConstraintSystem {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn free_dofs(&self) -> usize {
        self.boundary_dofs.iter().filter(|b| !**b).count()
    }

    /// Sparse form of the full constraint matrix.
    pub fn to_csr(&self) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(self.rows.len(), self.n_dofs);
        for (r, row) in self.rows.iter().enumerate() {
            for &(d, v) in &row.entries {
                coo.push(r, d, v);
            }
        }
        CsrMatrix::from(&coo)
    }
}

/// Dual basis per interface, built on the slave trace space.
#[derive(Debug, Clone)]
pub struct InterfaceDuals {
    pub interface: usize,
    pub dual: DualBasis,
}

/// Build the per-interface duals of the kind the strategy requires.
/// Coarsening failures propagate so the caller can skip the configuration.
pub fn build_interface_duals(model: &MultiPatchModel, strategy: Strategy) -> Result<Vec<InterfaceDuals>> {
    model
        .interfaces
        .iter()
        .enumerate()
        .map(|(fi, iface)| {
            let trace = model.trace_space(iface.slave, iface.slave_edge);
            let dual = build_dual(trace, strategy.dual_kind())?;
            Ok(InterfaceDuals { interface: fi, dual })
        })
        .collect()
}

/// The derivative of the second (or second-to-last) univariate basis
/// function at the edge: the multiplier scaling constant `c`.
pub fn multiplier_scaling(space: &crate::spline::TensorSpace2D, edge: Edge) -> f64 {
    let normal = if edge.is_xi_fixed() { &space.u } else { &space.v };
    let n = normal.dimension();
    let x = edge.fixed_value();
    let col = if x == 0.0 { 1 } else { n - 2 };
    normal.eval_one(col, x, 1).expect("edge inside the knot range")
}

/// Geometry of one side of an interface, in solution-space indices.
struct EdgeSide {
    patch: usize,
    edge: Edge,
    /// Univariate index of the edge column in the normal direction.
    edge_col: usize,
    next_col: usize,
    /// Derivatives of the edge/next univariate functions at the edge.
    d_edge: f64,
    d_next: f64,
    trace_dim: usize,
    offset: usize,
}

impl EdgeSide {
    fn new(model: &MultiPatchModel, patch: usize, edge: Edge, offset: usize) -> EdgeSide {
        let normal = model.normal_space(patch, edge);
        let trace = model.trace_space(patch, edge);
        let n = normal.dimension();
        let x = edge.fixed_value();
        let (edge_col, next_col) = if x == 0.0 { (0, 1) } else { (n - 1, n - 2) };
        EdgeSide {
            patch,
            edge,
            edge_col,
            next_col,
            d_edge: normal.eval_one(edge_col, x, 1).unwrap(),
            d_next: normal.eval_one(next_col, x, 1).unwrap(),
            trace_dim: trace.dimension(),
            offset,
        }
    }

    fn dof(&self, model: &MultiPatchModel, normal_col: usize, trace_idx: usize) -> usize {
        let space = &model.patches[self.patch].space;
        let idx = if self.edge.is_xi_fixed() {
            space.index(normal_col, trace_idx)
        } else {
            space.index(trace_idx, normal_col)
        };
        self.offset + idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EndKind {
    Boundary,
    InteriorVertex,
}

fn interface_end_kinds(model: &MultiPatchModel, iface: &Interface) -> [EndKind; 2] {
    let mut out = [EndKind::Boundary; 2];
    for (k, t) in [0.0f64, 1.0].iter().enumerate() {
        let sp = iface.slave_edge.point(*t);
        let x = model.patches[iface.slave].geometry.eval(sp.0, sp.1);
        let interior = model.vertices.iter().any(|v| {
            v.interior
                && (v.position[0] - x[0]).abs() < 1e-8
                && (v.position[1] - x[1]).abs() < 1e-8
        });
        if interior {
            out[k] = EndKind::InteriorVertex;
        }
    }
    out
}

/// Merged slave/master breakpoints of the interface, in the slave edge
/// parameter, so every quadrature segment sees polynomial integrands.
fn merged_interface_breaks(model: &MultiPatchModel, iface: &Interface) -> Result<Vec<f64>> {
    let slave_breaks = model.trace_space(iface.slave, iface.slave_edge).breakpoints();
    let master_breaks = model.trace_space(iface.master, iface.master_edge).breakpoints();

    let master_coord = |mp: (f64, f64)| if iface.master_edge.is_xi_fixed() { mp.1 } else { mp.0 };
    let mut all = slave_breaks.clone();
    // monotone map t ↦ s: locate master interior breakpoints by bisection
    let (_, mp0) = model.gluing_map(iface, 0.0)?;
    let (_, mp1) = model.gluing_map(iface, 1.0)?;
    let (s0, s1) = (master_coord(mp0), master_coord(mp1));
    for &v in &master_breaks[1..master_breaks.len() - 1] {
        if (v - s0).abs() < 1e-12 || (v - s1).abs() < 1e-12 {
            continue;
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let (_, mp) = model.gluing_map(iface, mid)?;
            let s = master_coord(mp);
            let below = if s1 > s0 { s < v } else { s > v };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        all.push(0.5 * (lo + hi));
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-11);
    Ok(all)
}

struct RowAccumulator {
    maps: Vec<BTreeMap<usize, f64>>,
}

impl RowAccumulator {
    fn new(n: usize) -> Self {
        RowAccumulator {
            maps: vec![BTreeMap::new(); n],
        }
    }

    fn add(&mut self, row: usize, dof: usize, v: f64) {
        if v != 0.0 {
            *self.maps[row].entry(dof).or_insert(0.0) += v;
        }
    }

    fn finish(self, drop_tol: f64) -> Vec<Vec<(usize, f64)>> {
        self.maps
            .into_iter()
            .map(|m| {
                let max = m.values().fold(0.0f64, |a, v| a.max(v.abs()));
                m.into_iter().filter(|(_, v)| v.abs() > drop_tol * max).collect()
            })
            .collect()
    }
}

/// Assemble the constraint system from prebuilt duals.
///
/// Value-jump rows test `[u]` against the duals; derivative-jump rows test
/// the slave-parametric derivative jump against the duals scaled by `1/c`,
/// with master contributions pulled back through the gluing Jacobian.
pub fn assemble_constraints(
    model: &MultiPatchModel,
    duals: &[InterfaceDuals],
    strategy: Strategy,
    continuity: Continuity,
) -> Result<ConstraintSystem> {
    if duals.len() != model.interfaces.len() {
        return Err(Error::Config("one dual basis per interface required".into()));
    }
    for d in duals {
        if d.dual.kind() != strategy.dual_kind() {
            return Err(Error::Config(format!(
                "dual kind {:?} does not match strategy {}",
                d.dual.kind(),
                strategy.name()
            )));
        }
    }
    let has_interior_vertices = model.vertices.iter().any(|v| v.interior);
    if strategy.is_two_patch_only() && has_interior_vertices {
        return Err(Error::Config(format!(
            "strategy {} only applies to models without interior vertices",
            strategy.name()
        )));
    }

    let offsets = model.dof_offsets();
    let n_dofs = model.total_dofs();
    let boundary = model.boundary_dofs();
    let layers = model.bc.layers();

    let mut rows: Vec<ConstraintRow> = Vec::new();
    let mut scalings = Vec::with_capacity(model.interfaces.len());
    let mut classification = DofClassification::default();
    let mut vertex_adjacent: Vec<usize> = Vec::new();

    for (fi, iface) in model.interfaces.iter().enumerate() {
        let dual = &duals[fi].dual;
        let slave = EdgeSide::new(model, iface.slave, iface.slave_edge, offsets[iface.slave]);
        let master = EdgeSide::new(model, iface.master, iface.master_edge, offsets[iface.master]);
        let trace = model.trace_space(iface.slave, iface.slave_edge).clone();
        let master_trace = model.trace_space(iface.master, iface.master_edge).clone();
        let p_t = trace.degree();
        let c_scale = slave.d_next;
        scalings.push(c_scale);

        let q = dual.dual_dimension();
        let shift = dual.index_shift();
        let ends = interface_end_kinds(model, iface);

        // row status per dual index
        let drop_row = |i: usize| -> bool {
            let tau = i + shift;
            (ends[0] == EndKind::Boundary && tau < layers)
                || (ends[1] == EndKind::Boundary && tau >= slave.trace_dim - layers)
        };
        let vertex_row = |i: usize| -> bool {
            if strategy.is_coarsened() {
                return false;
            }
            (ends[0] == EndKind::InteriorVertex && i <= p_t)
                || (ends[1] == EndKind::InteriorVertex && i + p_t + 1 >= q)
        };

        let families: &[Family] = match continuity {
            Continuity::C0 => &[Family::ValueJump],
            Continuity::C1 => &[Family::ValueJump, Family::DerivativeJump],
        };

        // slave-side integrals over the slave elements
        let mut acc0 = RowAccumulator::new(q);
        let mut acc1 = RowAccumulator::new(q);
        let rule_s = GaussRule::legendre(p_t + 1);
        for (a, b) in trace.elements() {
            for (t, w) in rule_s.mapped(a, b) {
                let (df, dv) = dual.eval_window(t);
                let (tf, tv) = trace.eval_basis(t, 0).unwrap();
                for (k, dk) in dv.iter().enumerate() {
                    for (l, tl) in tv.iter().enumerate() {
                        let tau = tf + l;
                        let contrib = w * dk * tl;
                        let d_edge_dof = slave.dof(model, slave.edge_col, tau);
                        acc0.add(df + k, d_edge_dof, contrib);
                        if continuity == Continuity::C1 {
                            let d_next_dof = slave.dof(model, slave.next_col, tau);
                            acc1.add(df + k, d_next_dof, contrib * (slave.d_next / c_scale));
                            acc1.add(df + k, d_edge_dof, contrib * (slave.d_edge / c_scale));
                        }
                    }
                }
            }
        }

        // master-side integrals over the merged partition
        let breaks = merged_interface_breaks(model, iface)?;
        let rule_m = GaussRule::legendre(p_t.max(master_trace.degree()) + 1);
        let slave_dir = if iface.slave_edge.is_xi_fixed() { 0 } else { 1 };
        let m_normal_axis = if iface.master_edge.is_xi_fixed() { 0 } else { 1 };
        let m_trace_axis = 1 - m_normal_axis;
        let mut seed = None;
        for seg in breaks.windows(2) {
            for (t, w) in rule_m.mapped(seg[0], seg[1]) {
                let (_, mp) = model.gluing_map_seeded(iface, t, seed)?;
                let s = if iface.master_edge.is_xi_fixed() { mp.1 } else { mp.0 };
                seed = Some(s);
                let (df, dv) = dual.eval_window(t);
                let (mf, mders) = master_trace.eval_ders(s, 1)?;
                for (k, dk) in dv.iter().enumerate() {
                    for l in 0..mders[0].len() {
                        let sigma = mf + l;
                        let edge_dof = master.dof(model, master.edge_col, sigma);
                        acc0.add(df + k, edge_dof, -w * dk * mders[0][l]);
                    }
                }
                if continuity == Continuity::C1 {
                    let e = model.gluing_jacobian(iface, t)?;
                    let ge_n = e[m_normal_axis][slave_dir];
                    let ge_t = e[m_trace_axis][slave_dir];
                    for (k, dk) in dv.iter().enumerate() {
                        for l in 0..mders[0].len() {
                            let sigma = mf + l;
                            let edge_dof = master.dof(model, master.edge_col, sigma);
                            let next_dof = master.dof(model, master.next_col, sigma);
                            let v_edge =
                                ge_n * master.d_edge * mders[0][l] + ge_t * mders[1][l];
                            acc1.add(df + k, edge_dof, -(w / c_scale) * dk * v_edge);
                            acc1.add(
                                df + k,
                                next_dof,
                                -(w / c_scale) * dk * ge_n * master.d_next * mders[0][l],
                            );
                        }
                    }
                }
            }
        }

        let rows0 = acc0.finish(1e-12);
        let rows1 = acc1.finish(1e-12);

        // classification bookkeeping
        let mut classes = InterfaceClassification::default();
        for tau in 0..slave.trace_dim {
            let edge_dof = slave.dof(model, slave.edge_col, tau);
            let next_dof = slave.dof(model, slave.next_col, tau);
            let paired_row = tau >= shift && tau < shift + q && !drop_row(tau - shift) && !vertex_row(tau - shift);
            if paired_row {
                if !boundary[edge_dof] {
                    classes.slave_edge_layer.push(edge_dof);
                }
                if continuity == Continuity::C1 && !boundary[next_dof] {
                    classes.slave_derivative_layer.push(next_dof);
                }
            } else {
                for d in [edge_dof, next_dof] {
                    if !boundary[d] && !vertex_adjacent.contains(&d) {
                        vertex_adjacent.push(d);
                    }
                }
            }
        }
        for sigma in 0..master.trace_dim {
            let edge_dof = master.dof(model, master.edge_col, sigma);
            let next_dof = master.dof(model, master.next_col, sigma);
            if !boundary[edge_dof] {
                classes.master_edge_layer.push(edge_dof);
            }
            if continuity == Continuity::C1 && !boundary[next_dof] {
                classes.master_derivative_layer.push(next_dof);
            }
        }
        classification.per_interface.push(classes);

        for family in families {
            for i in 0..q {
                if drop_row(i) {
                    continue;
                }
                let tau = i + shift;
                let is_vertex = vertex_row(i);
                let entries = match family {
                    Family::ValueJump => rows0[i].clone(),
                    Family::DerivativeJump => rows1[i].clone(),
                };
                if entries.is_empty() {
                    continue;
                }
                let eliminates = if is_vertex {
                    None
                } else {
                    let col = match family {
                        Family::ValueJump => slave.edge_col,
                        Family::DerivativeJump => slave.next_col,
                    };
                    Some(slave.dof(model, col, tau))
                };
                rows.push(ConstraintRow {
                    family: *family,
                    interface: Some(fi),
                    dual_index: i,
                    vertex_block: is_vertex,
                    eliminates,
                    entries,
                });
            }
        }
    }

    // pointwise vertex rows for the coarsened strategies
    if strategy.is_coarsened() {
        for vertex in model.vertices.iter().filter(|v| v.interior) {
            for iface in model.interfaces.iter() {
                for t_end in [0.0f64, 1.0] {
                    let sp = iface.slave_edge.point(t_end);
                    let x = model.patches[iface.slave].geometry.eval(sp.0, sp.1);
                    if (x[0] - vertex.position[0]).abs() > 1e-8
                        || (x[1] - vertex.position[1]).abs() > 1e-8
                    {
                        continue;
                    }
                    let slave = EdgeSide::new(model, iface.slave, iface.slave_edge, offsets[iface.slave]);
                    let master = EdgeSide::new(model, iface.master, iface.master_edge, offsets[iface.master]);
                    let trace = model.trace_space(iface.slave, iface.slave_edge);
                    let master_trace = model.trace_space(iface.master, iface.master_edge);
                    let tau_c = if t_end == 0.0 { 0 } else { trace.dimension() - 1 };
                    let (_, mp) = model.gluing_map(iface, t_end)?;
                    let s_c = if iface.master_edge.is_xi_fixed() { mp.1 } else { mp.0 };
                    let sigma_c = if s_c < 0.5 { 0 } else { master_trace.dimension() - 1 };

                    let mut value = BTreeMap::new();
                    let sd = slave.dof(model, slave.edge_col, tau_c);
                    let md = master.dof(model, master.edge_col, sigma_c);
                    value.insert(sd, 1.0);
                    *value.entry(md).or_insert(0.0) += -1.0;
                    rows.push(ConstraintRow {
                        family: Family::ValueJump,
                        interface: None,
                        dual_index: tau_c,
                        vertex_block: true,
                        eliminates: None,
                        entries: value.into_iter().collect(),
                    });

                    if continuity == Continuity::C1 {
                        let c_scale = slave.d_next;
                        let mut deriv = BTreeMap::new();
                        for (col, v) in [
                            (slave.dof(model, slave.edge_col, tau_c), slave.d_edge / c_scale),
                            (slave.dof(model, slave.next_col, tau_c), slave.d_next / c_scale),
                        ] {
                            *deriv.entry(col).or_insert(0.0) += v;
                        }
                        let e = model.gluing_jacobian(iface, t_end)?;
                        let slave_dir = if iface.slave_edge.is_xi_fixed() { 0 } else { 1 };
                        let m_normal_axis = if iface.master_edge.is_xi_fixed() { 0 } else { 1 };
                        let ge_n = e[m_normal_axis][slave_dir];
                        let ge_t = e[1 - m_normal_axis][slave_dir];
                        let s_eval = if sigma_c == 0 { 0.0 } else { 1.0 };
                        let (mf, mders) = master_trace.eval_ders(s_eval, 1)?;
                        for l in 0..mders[0].len() {
                            let sigma = mf + l;
                            let edge_dof = master.dof(model, master.edge_col, sigma);
                            let next_dof = master.dof(model, master.next_col, sigma);
                            let v_edge = ge_n * master.d_edge * mders[0][l] + ge_t * mders[1][l];
                            if v_edge != 0.0 {
                                *deriv.entry(edge_dof).or_insert(0.0) += -v_edge / c_scale;
                            }
                            let v_next = ge_n * master.d_next * mders[0][l];
                            if v_next != 0.0 {
                                *deriv.entry(next_dof).or_insert(0.0) += -v_next / c_scale;
                            }
                        }
                        rows.push(ConstraintRow {
                            family: Family::DerivativeJump,
                            interface: None,
                            dual_index: tau_c,
                            vertex_block: true,
                            eliminates: None,
                            entries: deriv.into_iter().filter(|(_, v)| v.abs() > 1e-14).collect(),
                        });
                    }
                }
            }
        }
    }

    classification.vertex_adjacent = vertex_adjacent;
    Ok(ConstraintSystem {
        n_dofs,
        strategy,
        continuity,
        rows,
        scalings,
        classification,
        boundary_dofs: boundary,
    })
}

/// Convenience: duals plus constraints in one call.
pub fn build_constraints(
    model: &MultiPatchModel,
    strategy: Strategy,
    continuity: Continuity,
) -> Result<ConstraintSystem> {
    let duals = build_interface_duals(model, strategy)?;
    assemble_constraints(model, &duals, strategy, continuity)
}

#[derive(Debug, Clone, Default)]
pub struct NullSpaceDiagnostics {
    pub vertex_rows: usize,
    pub split_columns: usize,
    pub vertex_rank: usize,
    pub rank_tolerance: f64,
}

/// Sparse basis of `ker(B_b)`, restricted to the boundary-free dofs.
#[derive(Debug, Clone)]
pub struct NullSpaceBasis {
    /// `n_dofs × n_condensed`; boundary rows are identically zero.
    pub matrix: CsrMatrix<f64>,
    /// The kept dof an unmerged column represents (`None` for columns merged
    /// by the vertex factorization).
    pub column_dofs: Vec<Option<usize>>,
    pub diagnostics: NullSpaceDiagnostics,
}

impl NullSpaceBasis {
    pub fn n_condensed(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Null-space basis via the block elimination: value rows express the slave
/// edge layer, derivative rows the next layer, and vertex rows are folded in
/// through a rank-revealing QR of the small split block.
pub fn null_space(cs: &ConstraintSystem) -> Result<NullSpaceBasis> {
    let n = cs.n_dofs;
    let mut eliminated_by: Vec<Option<usize>> = vec![None; n];
    for (ri, row) in cs.rows.iter().enumerate() {
        if let Some(d) = row.eliminates {
            if eliminated_by[d].is_some() {
                return Err(Error::Internal(format!("dof {d} eliminated twice")));
            }
            eliminated_by[d] = Some(ri);
        }
    }

    // kept dofs: free and not eliminated
    let mut kept_col: Vec<Option<usize>> = vec![None; n];
    let mut column_dofs = Vec::new();
    for d in 0..n {
        if !cs.boundary_dofs[d] && eliminated_by[d].is_none() {
            kept_col[d] = Some(column_dofs.len());
            column_dofs.push(d);
        }
    }
    let m = column_dofs.len();

    // expressions of eliminated dofs over kept columns; value rows first
    let mut exprs: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
    let unit_tol = 1e-9;
    for row in &cs.rows {
        if row.family != Family::ValueJump {
            continue;
        }
        let Some(g) = row.eliminates else { continue };
        let mut expr: Vec<(usize, f64)> = Vec::with_capacity(row.entries.len());
        let mut unit = 0.0;
        for &(d, v) in &row.entries {
            if d == g {
                unit = v;
            } else if cs.boundary_dofs[d] {
                // homogeneous boundary values contribute nothing
            } else if let Some(c) = kept_col[d] {
                expr.push((c, -v));
            } else if v.abs() > unit_tol {
                return Err(Error::Internal(format!(
                    "value row for dof {g} references eliminated dof {d} (|{v:.3e}|)"
                )));
            }
        }
        if (unit - 1.0).abs() > 1e-6 {
            return Err(Error::Internal(format!(
                "value row unit entry off identity: {unit} (dof {g})"
            )));
        }
        // normalize the not-exactly-one diagonal away
        for e in &mut expr {
            e.1 /= unit;
        }
        exprs[g] = Some(expr);
    }
    for row in &cs.rows {
        if row.family != Family::DerivativeJump {
            continue;
        }
        let Some(g) = row.eliminates else { continue };
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let mut unit = 0.0;
        for &(d, v) in &row.entries {
            if d == g {
                unit = v;
            } else if cs.boundary_dofs[d] {
                // homogeneous boundary values contribute nothing
            } else if let Some(c) = kept_col[d] {
                *acc.entry(c).or_insert(0.0) += -v;
            } else if let Some(expr) = exprs[d].as_ref() {
                for &(c, ev) in expr {
                    *acc.entry(c).or_insert(0.0) += -v * ev;
                }
            } else if v.abs() > unit_tol {
                return Err(Error::Internal(format!(
                    "derivative row for dof {g} references unresolved dof {d}"
                )));
            }
        }
        if (unit - 1.0).abs() > 1e-6 {
            return Err(Error::Internal(format!(
                "derivative row unit entry off identity: {unit} (dof {g})"
            )));
        }
        let expr: Vec<(usize, f64)> = acc
            .into_iter()
            .map(|(c, v)| (c, v / unit))
            .filter(|(_, v)| v.abs() > 1e-14)
            .collect();
        exprs[g] = Some(expr);
    }

    // interior null basis, column major
    let mut cols: Vec<Vec<(usize, f64)>> = (0..m).map(|c| vec![(column_dofs[c], 1.0)]).collect();
    for g in 0..n {
        if let Some(expr) = &exprs[g] {
            for &(c, v) in expr {
                cols[c].push((g, v));
            }
        }
    }

    // vertex rows restricted to the interior basis
    let vrows: Vec<&ConstraintRow> = cs.rows.iter().filter(|r| r.vertex_block).collect();
    let mut diagnostics = NullSpaceDiagnostics {
        vertex_rows: vrows.len(),
        ..Default::default()
    };
    if !vrows.is_empty() {
        // B̄ = B_v · C_inter; vertex rows only touch kept dofs
        let mut touched: BTreeMap<usize, usize> = BTreeMap::new();
        let mut bbar_entries: Vec<(usize, usize, f64)> = Vec::new();
        for (ri, row) in vrows.iter().enumerate() {
            for &(d, v) in &row.entries {
                if cs.boundary_dofs[d] {
                    continue;
                }
                let c = match kept_col[d] {
                    Some(c) => c,
                    None => {
                        return Err(Error::Internal(format!(
                            "vertex row references eliminated dof {d}"
                        )))
                    }
                };
                let next_id = touched.len();
                let local = *touched.entry(c).or_insert(next_id);
                bbar_entries.push((ri, local, v));
            }
        }
        let split_cols: Vec<usize> = {
            let mut v: Vec<(usize, usize)> = touched.iter().map(|(c, l)| (*l, *c)).collect();
            v.sort();
            v.into_iter().map(|(_, c)| c).collect()
        };
        let mut bbar = DMatrix::<f64>::zeros(vrows.len(), split_cols.len());
        for (r, l, v) in bbar_entries {
            bbar[(r, l)] += v;
        }
        diagnostics.split_columns = split_cols.len();

        let rel_tol = 1e-10;
        let (nullb, rank, tol) = qr_null_basis(&bbar, rel_tol);
        diagnostics.vertex_rank = rank;
        diagnostics.rank_tolerance = tol;

        // final columns: untouched kept columns, then merged combinations
        let in_split: Vec<bool> = {
            let mut f = vec![false; m];
            for &c in &split_cols {
                f[c] = true;
            }
            f
        };
        let mut final_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m - split_cols.len() + nullb.ncols());
        let mut final_dofs: Vec<Option<usize>> = Vec::new();
        for c in 0..m {
            if !in_split[c] {
                final_cols.push(std::mem::take(&mut cols[c]));
                final_dofs.push(Some(column_dofs[c]));
            }
        }
        for j in 0..nullb.ncols() {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (k, &c) in split_cols.iter().enumerate() {
                let w = nullb[(k, j)];
                if w.abs() < 1e-14 {
                    continue;
                }
                for &(d, v) in &cols[c] {
                    *acc.entry(d).or_insert(0.0) += w * v;
                }
            }
            final_cols.push(acc.into_iter().filter(|(_, v)| v.abs() > 1e-13).collect());
            final_dofs.push(None);
        }
        return Ok(NullSpaceBasis {
            matrix: columns_to_csr(n, &final_cols),
            column_dofs: final_dofs,
            diagnostics,
        });
    }

    Ok(NullSpaceBasis {
        matrix: columns_to_csr(n, &cols),
        column_dofs: column_dofs.into_iter().map(Some).collect(),
        diagnostics,
    })
}

/// Two-patch null space: requires a single interface and no interior
/// vertices, where the block formula applies without vertex handling.
pub fn null_space_two_patch(cs: &ConstraintSystem) -> Result<NullSpaceBasis> {
    if cs.rows.iter().any(|r| r.vertex_block) {
        return Err(Error::Config(
            "two-patch elimination does not handle vertex rows".into(),
        ));
    }
    null_space(cs)
}

/// Multi-patch null space with vertex treatment (either kind).
pub fn null_space_multipatch(cs: &ConstraintSystem) -> Result<NullSpaceBasis> {
    null_space(cs)
}

fn columns_to_csr(n_rows: usize, cols: &[Vec<(usize, f64)>]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n_rows, cols.len());
    for (c, col) in cols.iter().enumerate() {
        for &(d, v) in col {
            coo.push(d, c, v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Null basis of a small dense matrix by Householder QR with column
/// pivoting: `B P = Q [R₁ R₂; 0 0]`, null basis `P [-R₁⁻¹R₂; I]`.
/// Returns `(basis, rank, absolute tolerance used)`.
pub fn qr_null_basis(b: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize, f64) {
    let m = b.nrows();
    let n = b.ncols();
    let mut r = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    let kmax = m.min(n);
    let mut rank = 0;
    let mut tol = 0.0;
    for k in 0..kmax {
        // pivot: remaining column with the largest trailing norm
        let mut best = k;
        let mut best_norm = 0.0;
        for j in k..n {
            let norm: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = j;
            }
        }
        if k == 0 {
            tol = rel_tol * best_norm.max(f64::MIN_POSITIVE);
        }
        if best_norm <= tol {
            break;
        }
        if best != k {
            r.swap_columns(k, best);
            perm.swap(k, best);
        }
        // Householder vector for column k
        let alpha = -r[(k, k)].signum() * best_norm;
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    r[(i, j)] -= f * v[i - k];
                }
            }
        }
        r[(k, k)] = alpha;
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
        rank += 1;
    }
    // drop trailing diagonal entries below tolerance
    while rank > 0 && r[(rank - 1, rank - 1)].abs() <= tol {
        rank -= 1;
    }

    let null_dim = n - rank;
    let mut basis = DMatrix::<f64>::zeros(n, null_dim);
    for j in 0..null_dim {
        let col = rank + j;
        // back-substitute R₁ x = -R₂[:, j]
        let mut x = vec![0.0; rank];
        for i in (0..rank).rev() {
            let mut s = -r[(i, col)];
            for l in i + 1..rank {
                s -= r[(i, l)] * x[l];
            }
            x[i] = s / r[(i, i)];
        }
        for i in 0..rank {
            basis[(perm[i], j)] = x[i];
        }
        basis[(perm[col], j)] = 1.0;
    }
    (basis, rank, tol)
}

/// Condense a symmetric system onto the constrained space:
/// `Kᵐ = C_bᵀ K C_b`, `Fᵐ = C_bᵀ F`.
pub fn condense(
    k: &CsrMatrix<f64>,
    f: &DVector<f64>,
    basis: &NullSpaceBasis,
) -> Result<(CsrMatrix<f64>, DVector<f64>)> {
    let c = &basis.matrix;
    if k.nrows() != c.nrows() || k.ncols() != c.nrows() || f.len() != c.nrows() {
        return Err(Error::Dimension(format!(
            "condense: K is {}x{}, C is {}x{}, F has {}",
            k.nrows(),
            k.ncols(),
            c.nrows(),
            c.ncols(),
            f.len()
        )));
    }
    let kc = k * c;
    let km = &c.transpose() * &kc;
    let mut fm = DVector::zeros(c.ncols());
    for (row, col, v) in c.triplet_iter() {
        fm[col] += v * f[row];
    }
    Ok((km, fm))
}

/// Max-absolute entry of `B · C`, the null-space residual.
pub fn null_space_residual(cs: &ConstraintSystem, basis: &NullSpaceBasis) -> f64 {
    let b = cs.to_csr();
    let prod = &b * &basis.matrix;
    prod.values().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
