//! The decomposed domain: tensor-product patches with geometry maps,
//! interfaces with slave/master roles, vertex topology, the gluing map
//! between neighboring parametrizations, and the model file format.

use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::spline::{SplineSpace1D, TensorSpace2D};

const COINCIDENCE_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 50;

/// One of the four edges of the parametric square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    XiMin,
    XiMax,
    EtaMin,
    EtaMax,
}

impl Edge {
    pub fn parse(s: &str) -> Option<Edge> {
        match s {
            "xi_min" => Some(Edge::XiMin),
            "xi_max" => Some(Edge::XiMax),
            "eta_min" => Some(Edge::EtaMin),
            "eta_max" => Some(Edge::EtaMax),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::XiMin => "xi_min",
            Edge::XiMax => "xi_max",
            Edge::EtaMin => "eta_min",
            Edge::EtaMax => "eta_max",
        }
    }

    /// Parametric point on the edge at edge parameter `t`.
    pub fn point(self, t: f64) -> (f64, f64) {
        match self {
            Edge::XiMin => (0.0, t),
            Edge::XiMax => (1.0, t),
            Edge::EtaMin => (t, 0.0),
            Edge::EtaMax => (t, 1.0),
        }
    }

    /// True when the edge runs along `η` (i.e. `ξ` is fixed).
    pub fn is_xi_fixed(self) -> bool {
        matches!(self, Edge::XiMin | Edge::XiMax)
    }

    /// Fixed coordinate value on the edge.
    pub fn fixed_value(self) -> f64 {
        match self {
            Edge::XiMin | Edge::EtaMin => 0.0,
            Edge::XiMax | Edge::EtaMax => 1.0,
        }
    }
}

/// B-spline geometry map `F: [0,1]² → ℝ²`.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub space: TensorSpace2D,
    /// Control points in lexicographic order (`ξ` index fastest).
    pub points: Vec<[f64; 2]>,
}

impl Geometry {
    pub fn new(space: TensorSpace2D, points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != space.dimension() {
            return Err(Error::Model(format!(
                "geometry needs {} control points, got {}",
                space.dimension(),
                points.len()
            )));
        }
        Ok(Geometry { space, points })
    }

    pub fn eval(&self, xi: f64, eta: f64) -> [f64; 2] {
        let (fu, nu) = self.space.u.eval_basis(xi, 0).expect("xi in range");
        let (fv, nv) = self.space.v.eval_basis(eta, 0).expect("eta in range");
        let mut out = [0.0; 2];
        for (j, bv) in nv.iter().enumerate() {
            for (i, bu) in nu.iter().enumerate() {
                let p = self.points[self.space.index(fu + i, fv + j)];
                out[0] += bu * bv * p[0];
                out[1] += bu * bv * p[1];
            }
        }
        out
    }

    /// Jacobian `∂(x, y)/∂(ξ, η)` as rows `[[x_ξ, x_η], [y_ξ, y_η]]`.
    pub fn jacobian(&self, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        let (fu, du) = self.space.u.eval_ders(xi, 1).expect("xi in range");
        let (fv, dv) = self.space.v.eval_ders(eta, 1).expect("eta in range");
        let mut j = [[0.0; 2]; 2];
        for (jj, _) in dv[0].iter().enumerate() {
            for (ii, _) in du[0].iter().enumerate() {
                let p = self.points[self.space.index(fu + ii, fv + jj)];
                let d_xi = du[1][ii] * dv[0][jj];
                let d_eta = du[0][ii] * dv[1][jj];
                j[0][0] += d_xi * p[0];
                j[0][1] += d_eta * p[0];
                j[1][0] += d_xi * p[1];
                j[1][1] += d_eta * p[1];
            }
        }
        j
    }

    /// Second parametric derivatives `(F_ξξ, F_ξη, F_ηη)`.
    pub fn second_derivatives(&self, xi: f64, eta: f64) -> [[f64; 2]; 3] {
        let pu = self.space.u.degree().min(2);
        let pv = self.space.v.degree().min(2);
        let (fu, du) = self.space.u.eval_ders(xi, pu).expect("xi in range");
        let (fv, dv) = self.space.v.eval_ders(eta, pv).expect("eta in range");
        let get = |table: &Vec<Vec<f64>>, order: usize, idx: usize| -> f64 {
            if order < table.len() {
                table[order][idx]
            } else {
                0.0
            }
        };
        let mut out = [[0.0; 2]; 3];
        for jj in 0..dv[0].len() {
            for ii in 0..du[0].len() {
                let p = self.points[self.space.index(fu + ii, fv + jj)];
                let dxx = get(&du, 2, ii) * dv[0][jj];
                let dxy = du[1][ii] * get(&dv, 1, jj);
                let dyy = du[0][ii] * get(&dv, 2, jj);
                out[0][0] += dxx * p[0];
                out[0][1] += dxx * p[1];
                out[1][0] += dxy * p[0];
                out[1][1] += dxy * p[1];
                out[2][0] += dyy * p[0];
                out[2][1] += dyy * p[1];
            }
        }
        out
    }
}

pub fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

pub fn inv2(j: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = det2(j);
    [[j[1][1] / d, -j[0][1] / d], [-j[1][0] / d, j[0][0] / d]]
}

/// A patch: geometry map plus the solution space living on it.
#[derive(Debug, Clone)]
pub struct Patch {
    pub id: usize,
    pub geometry: Geometry,
    /// Initial solution-mesh breakpoints (refinement preserves their ratios).
    pub breaks_u: Vec<f64>,
    pub breaks_v: Vec<f64>,
    /// Degree added on top of the study degree (mismatched-degree models).
    pub elevate: usize,
    /// Solution space; set by [`MultiPatchModel::discretize`].
    pub space: TensorSpace2D,
}

/// An interface between a slave and a master patch.
///
/// The interface parameter `t ∈ [0, 1]` is the slave edge coordinate; the
/// slave side carries the finer trace mesh and the multiplier space.
#[derive(Debug, Clone)]
pub struct Interface {
    pub slave: usize,
    pub master: usize,
    pub slave_edge: Edge,
    pub master_edge: Edge,
    pub reversed: bool,
}

/// A junction where patch corners meet.
#[derive(Debug, Clone)]
pub struct VertexJunction {
    pub position: [f64; 2],
    /// Incident `(patch id, corner)` pairs; corners are `(ξ, η)` in `{0, 1}²`.
    pub incidences: Vec<(usize, (f64, f64))>,
    pub interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `u = ∂u/∂n = 0`: two control layers eliminated per boundary edge.
    Clamped,
    /// `u = 0`: one control layer eliminated.
    Fixed,
}

impl BoundaryCondition {
    pub fn layers(self) -> usize {
        match self {
            BoundaryCondition::Clamped => 2,
            BoundaryCondition::Fixed => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiPatchModel {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub vertices: Vec<VertexJunction>,
    pub bc: BoundaryCondition,
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub findings: Vec<(Severity, String)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.iter().all(|(s, _)| *s != Severity::Error)
    }

    pub fn warnings(&self) -> usize {
        self.findings.iter().filter(|(s, _)| *s == Severity::Warning).count()
    }
}

impl MultiPatchModel {
    /// Set the solution space of every patch: study degree (plus per-patch
    /// elevation) on the initial breakpoints, bisected `refines` times.
    pub fn discretize(&self, degree: usize, refines: usize) -> Result<MultiPatchModel> {
        let mut out = self.clone();
        for patch in &mut out.patches {
            let du = degree + patch.elevate;
            let su = SplineSpace1D::from_breakpoints(du, &patch.breaks_u)?.refine_bisect(refines);
            let sv = SplineSpace1D::from_breakpoints(du, &patch.breaks_v)?.refine_bisect(refines);
            patch.space = TensorSpace2D::new(su, sv);
        }
        Ok(out)
    }

    /// Global dof offsets per patch (patch dofs are numbered consecutively).
    pub fn dof_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.patches.len());
        let mut acc = 0;
        for p in &self.patches {
            offsets.push(acc);
            acc += p.space.dimension();
        }
        offsets
    }

    pub fn total_dofs(&self) -> usize {
        self.patches.iter().map(|p| p.space.dimension()).sum()
    }

    /// Edges of a patch that lie on the domain boundary.
    pub fn boundary_edges(&self, patch: usize) -> Vec<Edge> {
        [Edge::XiMin, Edge::XiMax, Edge::EtaMin, Edge::EtaMax]
            .into_iter()
            .filter(|&e| {
                !self.interfaces.iter().any(|f| {
                    (f.slave == patch && f.slave_edge == e) || (f.master == patch && f.master_edge == e)
                })
            })
            .collect()
    }

    /// Flags for dofs eliminated by the strong boundary conditions.
    pub fn boundary_dofs(&self) -> Vec<bool> {
        let layers = self.bc.layers();
        let offsets = self.dof_offsets();
        let mut out = vec![false; self.total_dofs()];
        for (k, patch) in self.patches.iter().enumerate() {
            let nu = patch.space.u.dimension();
            let nv = patch.space.v.dimension();
            for edge in self.boundary_edges(k) {
                for layer in 0..layers {
                    match edge {
                        Edge::XiMin => {
                            for iv in 0..nv {
                                out[offsets[k] + patch.space.index(layer, iv)] = true;
                            }
                        }
                        Edge::XiMax => {
                            for iv in 0..nv {
                                out[offsets[k] + patch.space.index(nu - 1 - layer, iv)] = true;
                            }
                        }
                        Edge::EtaMin => {
                            for iu in 0..nu {
                                out[offsets[k] + patch.space.index(iu, layer)] = true;
                            }
                        }
                        Edge::EtaMax => {
                            for iu in 0..nu {
                                out[offsets[k] + patch.space.index(iu, nv - 1 - layer)] = true;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Slave parametric point and matched master parametric point at edge
    /// parameter `t`, by Newton inversion of the master edge.
    pub fn gluing_map(&self, iface: &Interface, t: f64) -> Result<((f64, f64), (f64, f64))> {
        self.gluing_map_seeded(iface, t, None)
    }

    /// Same as [`Self::gluing_map`] but seeded with a previous solution.
    pub fn gluing_map_seeded(
        &self,
        iface: &Interface,
        t: f64,
        seed: Option<f64>,
    ) -> Result<((f64, f64), (f64, f64))> {
        let slave = &self.patches[iface.slave];
        let master = &self.patches[iface.master];
        let sp = iface.slave_edge.point(t);
        let target = slave.geometry.eval(sp.0, sp.1);

        let mut s = seed.unwrap_or(if iface.reversed { 1.0 - t } else { t }).clamp(0.0, 1.0);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITERS {
            let mp = iface.master_edge.point(s);
            let x = master.geometry.eval(mp.0, mp.1);
            let r = [x[0] - target[0], x[1] - target[1]];
            if (r[0] * r[0] + r[1] * r[1]).sqrt() < NEWTON_TOL {
                converged = true;
                break;
            }
            let j = master.geometry.jacobian(mp.0, mp.1);
            // tangent along the master edge coordinate
            let tgt = if iface.master_edge.is_xi_fixed() {
                [j[0][1], j[1][1]]
            } else {
                [j[0][0], j[1][0]]
            };
            let denom = tgt[0] * tgt[0] + tgt[1] * tgt[1];
            if denom == 0.0 {
                return Err(Error::Geometry(format!(
                    "degenerate master edge tangent at t = {t}"
                )));
            }
            let step = (r[0] * tgt[0] + r[1] * tgt[1]) / denom;
            s = (s - step).clamp(-0.25, 1.25);
        }
        if !converged {
            // final residual check (clamped endpoints converge in 0 steps)
            let mp = iface.master_edge.point(s.clamp(0.0, 1.0));
            let x = master.geometry.eval(mp.0, mp.1);
            let r = ((x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2)).sqrt();
            if r > COINCIDENCE_TOL {
                return Err(Error::Geometry(format!(
                    "gluing map failed to converge at t = {t} (residual {r:.3e})"
                )));
            }
        }
        let s = s.clamp(0.0, 1.0);
        Ok((sp, iface.master_edge.point(s)))
    }

    /// Jacobian `∇E_sm = (∇F_m)⁻¹ ∇F_s` of the gluing composition at `t`.
    pub fn gluing_jacobian(&self, iface: &Interface, t: f64) -> Result<[[f64; 2]; 2]> {
        let (sp, mp) = self.gluing_map(iface, t)?;
        let js = self.patches[iface.slave].geometry.jacobian(sp.0, sp.1);
        let jm = self.patches[iface.master].geometry.jacobian(mp.0, mp.1);
        let djm = det2(&jm);
        if djm.abs() < 1e-14 {
            return Err(Error::Geometry(format!("singular master Jacobian at t = {t}")));
        }
        let jm_inv = inv2(&jm);
        let mut e = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] = jm_inv[i][0] * js[0][j] + jm_inv[i][1] * js[1][j];
            }
        }
        Ok(e)
    }

    /// Structural and geometric diagnostics: bijectivity, interface
    /// coincidence, vertex consistency and the slave-finer-mesh rule.
    pub fn validate(&self) -> ValidationReport {
        let mut findings = Vec::new();
        let rule = GaussRule::legendre(3);

        for patch in &self.patches {
            let mut min_det = f64::INFINITY;
            for (au, bu) in patch.space.u.elements() {
                for (av, bv) in patch.space.v.elements() {
                    for (x, _) in rule.mapped(au, bu) {
                        for (y, _) in rule.mapped(av, bv) {
                            min_det = min_det.min(det2(&patch.geometry.jacobian(x, y)));
                        }
                    }
                }
            }
            if min_det <= 0.0 {
                findings.push((
                    Severity::Error,
                    format!("patch {}: geometry map not orientation preserving (min det {min_det:.3e})", patch.id),
                ));
            }
        }

        for (fi, iface) in self.interfaces.iter().enumerate() {
            let mut worst = 0.0f64;
            let mut prev_s: Option<f64> = None;
            let mut monotone = true;
            let mut increasing: Option<bool> = None;
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                match self.gluing_map(iface, t) {
                    Ok((sp, mp)) => {
                        let xs = self.patches[iface.slave].geometry.eval(sp.0, sp.1);
                        let xm = self.patches[iface.master].geometry.eval(mp.0, mp.1);
                        worst = worst.max(((xs[0] - xm[0]).powi(2) + (xs[1] - xm[1]).powi(2)).sqrt());
                        let s = if iface.master_edge.is_xi_fixed() { mp.1 } else { mp.0 };
                        if let Some(p) = prev_s {
                            let inc = s > p - 1e-13;
                            match increasing {
                                None => increasing = Some(inc),
                                Some(dir) if dir != inc && (s - p).abs() > 1e-12 => monotone = false,
                                _ => {}
                            }
                        }
                        prev_s = Some(s);
                    }
                    Err(e) => {
                        findings.push((Severity::Error, format!("interface {fi}: {e}")));
                        break;
                    }
                }
            }
            if worst > COINCIDENCE_TOL {
                findings.push((
                    Severity::Error,
                    format!("interface {fi}: edges not coincident (max gap {worst:.3e})"),
                ));
            }
            if !monotone {
                findings.push((Severity::Error, format!("interface {fi}: gluing map folds")));
            }

            let slave_knots = self.trace_space(iface.slave, iface.slave_edge).num_elements();
            let master_knots = self.trace_space(iface.master, iface.master_edge).num_elements();
            if slave_knots < master_knots {
                findings.push((
                    Severity::Warning,
                    format!(
                        "interface {fi}: slave trace mesh ({slave_knots} elements) coarser than master ({master_knots})"
                    ),
                ));
            } else if slave_knots == master_knots && iface.slave > iface.master {
                findings.push((
                    Severity::Info,
                    format!("interface {fi}: equally fine sides; lower patch id is the conventional slave"),
                ));
            }
        }

        for (vi, v) in self.vertices.iter().enumerate() {
            for &(pid, (cu, cv)) in &v.incidences {
                let x = self.patches[pid].geometry.eval(cu, cv);
                let gap = ((x[0] - v.position[0]).powi(2) + (x[1] - v.position[1]).powi(2)).sqrt();
                if gap > COINCIDENCE_TOL {
                    findings.push((
                        Severity::Error,
                        format!("vertex {vi}: patch {pid} corner off by {gap:.3e}"),
                    ));
                }
            }
        }

        ValidationReport { findings }
    }

    /// Univariate solution space along a patch edge.
    pub fn trace_space(&self, patch: usize, edge: Edge) -> &SplineSpace1D {
        let p = &self.patches[patch];
        if edge.is_xi_fixed() {
            &p.space.v
        } else {
            &p.space.u
        }
    }

    /// Univariate solution space transverse to a patch edge.
    pub fn normal_space(&self, patch: usize, edge: Edge) -> &SplineSpace1D {
        let p = &self.patches[patch];
        if edge.is_xi_fixed() {
            &p.space.u
        } else {
            &p.space.v
        }
    }

    /// Interfaces incident to each patch edge never overlap; vertices are the
    /// interface endpoints. Derives the vertex set geometrically.
    pub fn derive_vertices(&mut self) {
        let mut positions: Vec<[f64; 2]> = Vec::new();
        for iface in &self.interfaces {
            for t in [0.0, 1.0] {
                let sp = iface.slave_edge.point(t);
                let x = self.patches[iface.slave].geometry.eval(sp.0, sp.1);
                if !positions
                    .iter()
                    .any(|p| (p[0] - x[0]).abs() < 1e-8 && (p[1] - x[1]).abs() < 1e-8)
                {
                    positions.push(x);
                }
            }
        }
        let mut vertices = Vec::new();
        for pos in positions {
            let mut incidences = Vec::new();
            for patch in &self.patches {
                for cu in [0.0, 1.0] {
                    for cv in [0.0, 1.0] {
                        let x = patch.geometry.eval(cu, cv);
                        if (x[0] - pos[0]).abs() < 1e-8 && (x[1] - pos[1]).abs() < 1e-8 {
                            incidences.push((patch.id, (cu, cv)));
                        }
                    }
                }
            }
            // interior when no incident corner touches a boundary edge
            let mut interior = !incidences.is_empty();
            for &(pid, (cu, cv)) in &incidences {
                let adjacent = [
                    if cu == 0.0 { Edge::XiMin } else { Edge::XiMax },
                    if cv == 0.0 { Edge::EtaMin } else { Edge::EtaMax },
                ];
                let boundary = self.boundary_edges(pid);
                if adjacent.iter().any(|e| boundary.contains(e)) {
                    interior = false;
                }
            }
            vertices.push(VertexJunction {
                position: pos,
                incidences,
                interior,
            });
        }
        self.vertices = vertices;
    }
}

// ---------------------------------------------------------------------------
// model file format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Number(f64),
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for raw in line.split_whitespace() {
            let tok = match raw {
                "{" => Token::Open,
                "}" => Token::Close,
                w => match w.parse::<f64>() {
                    Ok(v) => Token::Number(v),
                    Err(_) => Token::Word(w.to_string()),
                },
            };
            tokens.push((lineno + 1, tok));
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map_or(0, |(l, _)| *l)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line(),
            msg: msg.into(),
        }
    }

    fn expect_open(&mut self) -> Result<()> {
        match self.next() {
            Some(Token::Open) => Ok(()),
            _ => Err(self.err("expected '{'")),
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next() {
            Some(Token::Number(v)) => Ok(v),
            _ => Err(self.err("expected a number")),
        }
    }

    fn word(&mut self) -> Result<String> {
        match self.next() {
            Some(Token::Word(w)) => Ok(w),
            _ => Err(self.err("expected a word")),
        }
    }

    fn number_list(&mut self) -> Result<Vec<f64>> {
        self.expect_open()?;
        let mut out = Vec::new();
        loop {
            match self.next() {
                Some(Token::Number(v)) => out.push(v),
                Some(Token::Close) => return Ok(out),
                _ => return Err(self.err("expected a number or '}'")),
            }
        }
    }
}

#[derive(Default)]
struct PatchDraft {
    id: Option<usize>,
    degree_u: Option<usize>,
    degree_v: Option<usize>,
    knots_u: Option<Vec<f64>>,
    knots_v: Option<Vec<f64>>,
    control_points: Option<Vec<[f64; 2]>>,
    elems_u: Option<usize>,
    elems_v: Option<usize>,
    mesh_u: Option<Vec<f64>>,
    mesh_v: Option<Vec<f64>>,
    elevate: usize,
}

/// Parse the structured model text format.
///
/// Blocks: `patch { … }`, `interface { … }`, `vertex { … }` (optional; the
/// vertex set is derived when absent) and `bc { type clamped|fixed }`.
pub fn parse_model(text: &str) -> Result<MultiPatchModel> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let mut patches: Vec<Patch> = Vec::new();
    let mut interfaces = Vec::new();
    let mut bc = None;
    let mut explicit_vertices: Vec<VertexJunction> = Vec::new();

    while let Some(tok) = parser.next() {
        let block = match tok {
            Token::Word(w) => w,
            _ => return Err(parser.err("expected a block name")),
        };
        match block.as_str() {
            "patch" => {
                parser.expect_open()?;
                let mut draft = PatchDraft::default();
                loop {
                    match parser.next() {
                        Some(Token::Close) => break,
                        Some(Token::Word(key)) => match key.as_str() {
                            "id" => draft.id = Some(parser.number()? as usize),
                            "degree_u" => draft.degree_u = Some(parser.number()? as usize),
                            "degree_v" => draft.degree_v = Some(parser.number()? as usize),
                            "knots_u" => draft.knots_u = Some(parser.number_list()?),
                            "knots_v" => draft.knots_v = Some(parser.number_list()?),
                            "elems_u" => draft.elems_u = Some(parser.number()? as usize),
                            "elems_v" => draft.elems_v = Some(parser.number()? as usize),
                            "mesh_u" => draft.mesh_u = Some(parser.number_list()?),
                            "mesh_v" => draft.mesh_v = Some(parser.number_list()?),
                            "elevate" => draft.elevate = parser.number()? as usize,
                            "control_points" => {
                                let flat = parser.number_list()?;
                                if flat.len() % 2 != 0 {
                                    return Err(parser.err("control_points needs x y pairs"));
                                }
                                draft.control_points =
                                    Some(flat.chunks(2).map(|c| [c[0], c[1]]).collect());
                            }
                            other => return Err(parser.err(format!("unknown patch field '{other}'"))),
                        },
                        _ => return Err(parser.err("expected a field name or '}'")),
                    }
                }
                patches.push(finish_patch(draft, &parser)?);
            }
            "interface" => {
                parser.expect_open()?;
                let (mut slave, mut master, mut se, mut me, mut rev) = (None, None, None, None, false);
                loop {
                    match parser.next() {
                        Some(Token::Close) => break,
                        Some(Token::Word(key)) => match key.as_str() {
                            "slave" => slave = Some(parser.number()? as usize),
                            "master" => master = Some(parser.number()? as usize),
                            "slave_edge" => {
                                let w = parser.word()?;
                                se = Some(Edge::parse(&w).ok_or_else(|| parser.err("bad edge name"))?);
                            }
                            "master_edge" => {
                                let w = parser.word()?;
                                me = Some(Edge::parse(&w).ok_or_else(|| parser.err("bad edge name"))?);
                            }
                            "reversed" => rev = parser.word()? == "true",
                            other => return Err(parser.err(format!("unknown interface field '{other}'"))),
                        },
                        _ => return Err(parser.err("expected a field name or '}'")),
                    }
                }
                interfaces.push(Interface {
                    slave: slave.ok_or_else(|| parser.err("interface needs 'slave'"))?,
                    master: master.ok_or_else(|| parser.err("interface needs 'master'"))?,
                    slave_edge: se.ok_or_else(|| parser.err("interface needs 'slave_edge'"))?,
                    master_edge: me.ok_or_else(|| parser.err("interface needs 'master_edge'"))?,
                    reversed: rev,
                });
            }
            "vertex" => {
                parser.expect_open()?;
                let mut position = None;
                let mut interior = None;
                loop {
                    match parser.next() {
                        Some(Token::Close) => break,
                        Some(Token::Word(key)) => match key.as_str() {
                            "position" => {
                                let xy = parser.number_list()?;
                                if xy.len() != 2 {
                                    return Err(parser.err("vertex position needs two numbers"));
                                }
                                position = Some([xy[0], xy[1]]);
                            }
                            "interior" => interior = Some(parser.word()? == "true"),
                            other => return Err(parser.err(format!("unknown vertex field '{other}'"))),
                        },
                        _ => return Err(parser.err("expected a field name or '}'")),
                    }
                }
                explicit_vertices.push(VertexJunction {
                    position: position.ok_or_else(|| parser.err("vertex needs 'position'"))?,
                    incidences: Vec::new(),
                    interior: interior.unwrap_or(true),
                });
            }
            "bc" => {
                parser.expect_open()?;
                loop {
                    match parser.next() {
                        Some(Token::Close) => break,
                        Some(Token::Word(key)) if key == "type" => {
                            bc = Some(match parser.word()?.as_str() {
                                "clamped" => BoundaryCondition::Clamped,
                                "fixed" => BoundaryCondition::Fixed,
                                other => return Err(parser.err(format!("unknown bc type '{other}'"))),
                            });
                        }
                        _ => return Err(parser.err("expected 'type' or '}'")),
                    }
                }
            }
            other => return Err(parser.err(format!("unknown block '{other}'"))),
        }
    }

    patches.sort_by_key(|p| p.id);
    for (i, p) in patches.iter().enumerate() {
        if p.id != i {
            return Err(Error::Model(format!("patch ids must be 0..n, missing id {i}")));
        }
    }
    let mut model = MultiPatchModel {
        patches,
        interfaces,
        vertices: Vec::new(),
        bc: bc.ok_or_else(|| Error::Model("missing bc block".into()))?,
    };
    for iface in &model.interfaces {
        if iface.slave >= model.patches.len() || iface.master >= model.patches.len() {
            return Err(Error::Model("interface references unknown patch id".into()));
        }
    }
    model.derive_vertices();
    if !explicit_vertices.is_empty() {
        // explicit blocks override the derived interior flags
        for ev in &explicit_vertices {
            for v in &mut model.vertices {
                if (v.position[0] - ev.position[0]).abs() < 1e-8
                    && (v.position[1] - ev.position[1]).abs() < 1e-8
                {
                    v.interior = ev.interior;
                }
            }
        }
    }
    Ok(model)
}

fn finish_patch(draft: PatchDraft, parser: &Parser) -> Result<Patch> {
    let id = draft.id.ok_or_else(|| parser.err("patch needs 'id'"))?;
    let du = draft.degree_u.ok_or_else(|| parser.err("patch needs 'degree_u'"))?;
    let dv = draft.degree_v.ok_or_else(|| parser.err("patch needs 'degree_v'"))?;
    let ku = draft.knots_u.ok_or_else(|| parser.err("patch needs 'knots_u'"))?;
    let kv = draft.knots_v.ok_or_else(|| parser.err("patch needs 'knots_v'"))?;
    let pts = draft
        .control_points
        .ok_or_else(|| parser.err("patch needs 'control_points'"))?;
    let gu = SplineSpace1D::new(du, ku)?;
    let gv = SplineSpace1D::new(dv, kv)?;
    let geometry = Geometry::new(TensorSpace2D::new(gu.clone(), gv.clone()), pts)?;

    let breaks_u = match (&draft.mesh_u, draft.elems_u) {
        (Some(mesh), _) => {
            let mut b = vec![0.0];
            b.extend_from_slice(mesh);
            b.push(1.0);
            b
        }
        (None, Some(n)) => (0..=n).map(|i| i as f64 / n as f64).collect(),
        (None, None) => gu.breakpoints(),
    };
    let breaks_v = match (&draft.mesh_v, draft.elems_v) {
        (Some(mesh), _) => {
            let mut b = vec![0.0];
            b.extend_from_slice(mesh);
            b.push(1.0);
            b
        }
        (None, Some(n)) => (0..=n).map(|i| i as f64 / n as f64).collect(),
        (None, None) => gv.breakpoints(),
    };

    // placeholder solution space; discretize() installs the real one
    let space = TensorSpace2D::new(
        SplineSpace1D::from_breakpoints(1.max(du.min(crate::spline::MAX_DEGREE)), &breaks_u)?,
        SplineSpace1D::from_breakpoints(1.max(dv.min(crate::spline::MAX_DEGREE)), &breaks_v)?,
    );
    Ok(Patch {
        id,
        geometry,
        breaks_u,
        breaks_v,
        elevate: draft.elevate,
        space,
    })
}

pub fn load_model(path: &std::path::Path) -> Result<MultiPatchModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The split unit square: `Ω₁ = (0, 0.4) × (0, 1)`, `Ω₂ = (0.4, 1) × (0, 1)`,
    /// with the finer right patch as slave.
    pub fn two_patch_text() -> &'static str {
        r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  0.4 0  0 1  0.4 1 }
          elems_u 2  elems_v 2
        }
        patch {
          id 1
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0.4 0  1 0  0.4 1  1 1 }
          elems_u 3  elems_v 3
        }
        interface { slave 1 master 0 slave_edge xi_min master_edge xi_max }
        bc { type clamped }
        "#
    }

    #[test]
    fn parses_two_patch_model() {
        let model = parse_model(two_patch_text()).unwrap();
        assert_eq!(model.patches.len(), 2);
        assert_eq!(model.interfaces.len(), 1);
        assert_eq!(model.bc, BoundaryCondition::Clamped);
        assert_eq!(model.vertices.len(), 2);
        assert!(model.vertices.iter().all(|v| !v.interior));
    }

    #[test]
    fn affine_gluing_is_identity_reparametrization() {
        let model = parse_model(two_patch_text()).unwrap().discretize(2, 0).unwrap();
        let iface = &model.interfaces[0];
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let (sp, mp) = model.gluing_map(iface, t).unwrap();
            assert_eq!(sp, (0.0, t));
            assert!((mp.0 - 1.0).abs() < 1e-12);
            assert!((mp.1 - t).abs() < 1e-12, "t = {t}: master {mp:?}");
        }
    }

    #[test]
    fn gluing_jacobian_of_affine_split() {
        // widths 0.4 (master) and 0.6 (slave): ∂ξ_m/∂ξ_s = 0.6 / 0.4
        let model = parse_model(two_patch_text()).unwrap().discretize(2, 0).unwrap();
        let e = model.gluing_jacobian(&model.interfaces[0], 0.5).unwrap();
        assert!((e[0][0] - 0.6 / 0.4).abs() < 1e-12);
        assert!((e[1][1] - 1.0).abs() < 1e-12);
        assert!(e[0][1].abs() < 1e-13 && e[1][0].abs() < 1e-13);
    }

    #[test]
    fn gluing_jacobian_matches_finite_differences() {
        let model = parse_model(two_patch_text()).unwrap().discretize(2, 0).unwrap();
        let iface = &model.interfaces[0];
        let t = 0.3;
        let h = 1e-6;
        let e = model.gluing_jacobian(iface, t).unwrap();
        let (_, mp_plus) = model.gluing_map(iface, t + h).unwrap();
        let (_, mp_minus) = model.gluing_map(iface, t - h).unwrap();
        // the slave edge coordinate is η_s: column 1 of ∇E
        let fd = [
            (mp_plus.0 - mp_minus.0) / (2.0 * h),
            (mp_plus.1 - mp_minus.1) / (2.0 * h),
        ];
        assert!((e[0][1] - fd[0]).abs() < 1e-6);
        assert!((e[1][1] - fd[1]).abs() < 1e-6);
    }

    #[test]
    fn reversed_interface_maps_to_one_minus_t() {
        let text = r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  0.5 0  0 1  0.5 1 }
        }
        patch {
          id 1
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          # reversed parametrization: η runs downward
          control_points { 0.5 1  1 1  0.5 0  1 0 }
          elems_u 2  elems_v 2
        }
        interface { slave 1 master 0 slave_edge xi_min master_edge xi_max reversed true }
        bc { type clamped }
        "#;
        let model = parse_model(text).unwrap().discretize(2, 0).unwrap();
        let iface = &model.interfaces[0];
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let (_, mp) = model.gluing_map(iface, t).unwrap();
            assert!((mp.1 - (1.0 - t)).abs() < 1e-10, "t = {t}: {mp:?}");
        }
    }

    #[test]
    fn validation_passes_for_two_patch_and_flags_overlap() {
        let model = parse_model(two_patch_text()).unwrap().discretize(2, 1).unwrap();
        let report = model.validate();
        assert!(report.passed(), "{:?}", report.findings);

        // an overlapping second patch breaks coincidence
        let bad = r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  0.5 0  0 1  0.5 1 }
        }
        patch {
          id 1
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0.3 0  1 0  0.3 1  1 1 }
          elems_u 2  elems_v 2
        }
        interface { slave 1 master 0 slave_edge xi_min master_edge xi_max }
        bc { type clamped }
        "#;
        let model = parse_model(bad).unwrap().discretize(2, 0).unwrap();
        let report = model.validate();
        assert!(!report.passed());
    }

    #[test]
    fn coarser_slave_is_a_warning_not_an_error() {
        let mut model = parse_model(two_patch_text()).unwrap();
        // swap roles so the coarser left patch is the slave
        model.interfaces[0] = Interface {
            slave: 0,
            master: 1,
            slave_edge: Edge::XiMax,
            master_edge: Edge::XiMin,
            reversed: false,
        };
        let model = model.discretize(2, 0).unwrap();
        let report = model.validate();
        assert!(report.passed(), "{:?}", report.findings);
        assert!(report.warnings() > 0);
    }

    #[test]
    fn boundary_dofs_cover_two_layers_for_clamped() {
        let model = parse_model(two_patch_text()).unwrap().discretize(2, 1).unwrap();
        let flags = model.boundary_dofs();
        let p0 = &model.patches[0];
        let nu = p0.space.u.dimension();
        let nv = p0.space.v.dimension();
        assert_eq!((nu, nv), (6, 6));
        // left patch: xi_min, eta_min, eta_max are boundary; xi_max is the interface
        for iv in 0..nv {
            assert!(flags[p0.space.index(0, iv)]);
            assert!(flags[p0.space.index(1, iv)]);
        }
        for iu in 2..nu {
            for layer in [0, 1, nv - 2, nv - 1] {
                assert!(flags[p0.space.index(iu, layer)]);
            }
        }
        // interface column stays free away from boundary layers
        assert!(!flags[p0.space.index(nu - 1, 3)]);
        assert!(!flags[p0.space.index(2, 2)]);
    }

    #[test]
    fn discretize_respects_elevation_and_refinement() {
        let text = r#"
        patch {
          id 0
          degree_u 1  degree_v 1
          knots_u { 0 0 1 1 }
          knots_v { 0 0 1 1 }
          control_points { 0 0  1 0  0 1  1 1 }
          elems_u 2  elems_v 1
          elevate 1
        }
        bc { type fixed }
        "#;
        let model = parse_model(text).unwrap().discretize(2, 1).unwrap();
        let s = &model.patches[0].space;
        assert_eq!(s.u.degree(), 3);
        assert_eq!(s.u.num_elements(), 4);
        assert_eq!(s.v.num_elements(), 2);
    }
}
