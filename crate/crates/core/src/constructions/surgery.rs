use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::mesh::{edge_key, MeshBuilder, Point3, TriangleMesh};
use crate::spectral::ConformalDensity;

/// Vertices on each stitching ring.
pub const RING_VERTICES: usize = 16;
/// Component label of the host surface.
pub const HOST: u8 = 0;
/// Component label of the guest surface, tube rows, and gluing seam.
pub const GUEST: u8 = 1;

const MAX_CUT_HOPS: usize = 8;
const FLAT_TOL: f64 = 1e-9;

/// A geodesic disk around `center` prepared for removal: the combinatorial
/// disk, its boundary loop in an intrinsic chart, and the graded rings that
/// will replace it.
#[derive(Debug, Clone)]
pub struct PreparedCap {
    pub center: usize,
    pub epsilon: f64,
    pub resolution: usize,
    /// Hop radius of the removed combinatorial disk.
    pub hops: usize,
    pub removed_vertices: Vec<usize>,
    pub removed_faces: Vec<usize>,
    /// Boundary loop, counter-clockwise in the chart.
    pub boundary: Vec<usize>,
    boundary_chart: Vec<[f64; 2]>,
    /// Smallest chart radius of the boundary loop.
    pub boundary_radius: f64,
    /// Radii of the inserted rings; the first equals `epsilon`.
    pub ring_radii: Vec<f64>,
    /// Density on the cap.
    pub density: f64,
}

/// Largest admissible neck radius `0.2 sqrt(area / pi)`.
fn epsilon_guard(mesh: &TriangleMesh) -> f64 {
    0.2 * (mesh.total_area() / PI).sqrt()
}

/// Selects the smallest hop disk around `center` whose boundary lies at
/// chart radius at least `1.5 epsilon`, unfolds it into the plane and plans
/// the rings.
pub fn prepare_cap(
    mesh: &TriangleMesh,
    density: &ConformalDensity,
    center: usize,
    epsilon: f64,
    resolution: usize,
) -> Result<PreparedCap> {
    let n = mesh.num_vertices();
    if center >= n {
        return Err(Error::InvalidArgument(format!("center vertex {center} out of range")));
    }
    if density.len() != n {
        return Err(Error::Density(format!(
            "density has {} entries for {n} vertices",
            density.len()
        )));
    }
    if resolution < 6 {
        return Err(Error::InvalidArgument(format!("ring resolution {resolution} below 6")));
    }
    let guard = epsilon_guard(mesh);
    if !(epsilon > 0.0) || epsilon >= guard {
        return Err(Error::Guard(format!("neck radius {epsilon} outside (0, {guard:.4})")));
    }

    let hop = hop_distances(mesh, center);
    let mut last_reason = String::new();
    for hops in 1..=MAX_CUT_HOPS {
        let disk = match cut_disk(mesh, &hop, hops) {
            Ok(d) => d,
            Err(reason) => {
                last_reason = reason;
                continue;
            }
        };
        let chart = unfold(mesh, center, &disk.removed_faces);
        let pts: Vec<[f64; 2]> = disk.boundary.iter().map(|v| chart[v]).collect();
        if let Err(reason) = check_star_shaped(&pts) {
            last_reason = reason;
            continue;
        }
        let boundary_radius = pts.iter().map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min);
        if boundary_radius < 1.5 * epsilon {
            last_reason = format!("boundary radius {boundary_radius:.4} below 1.5 eps at {hops} hops");
            continue;
        }
        let rho0 = density.values()[center];
        for &v in disk.removed_vertices.iter().chain(&disk.boundary) {
            let r = density.values()[v];
            if (r - rho0).abs() > FLAT_TOL * rho0 {
                return Err(Error::Preparation(format!(
                    "density is not constant on the cap at vertex {center} (vertex {v}: {r} vs {rho0}); flatten it first"
                )));
            }
        }
        let ratio = 1.0 + 2.0 * PI / resolution as f64;
        let mut ring_radii = vec![epsilon];
        while ring_radii.last().unwrap() * ratio < 0.75 * boundary_radius {
            let next = ring_radii.last().unwrap() * ratio;
            ring_radii.push(next);
        }
        return Ok(PreparedCap {
            center,
            epsilon,
            resolution,
            hops,
            removed_vertices: disk.removed_vertices,
            removed_faces: disk.removed_faces,
            boundary: disk.boundary,
            boundary_chart: pts,
            boundary_radius,
            ring_radii,
            density: rho0,
        });
    }
    Err(Error::Guard(format!(
        "no admissible disk of at most {MAX_CUT_HOPS} hops around vertex {center}: {last_reason}"
    )))
}

fn hop_distances(mesh: &TriangleMesh, source: usize) -> Vec<usize> {
    let mut hop = vec![usize::MAX; mesh.num_vertices()];
    hop[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for (w, _) in mesh.neighbors(v) {
            if hop[w] == usize::MAX {
                hop[w] = hop[v] + 1;
                queue.push_back(w);
            }
        }
    }
    hop
}

struct Disk {
    removed_vertices: Vec<usize>,
    removed_faces: Vec<usize>,
    boundary: Vec<usize>,
}

fn cut_disk(mesh: &TriangleMesh, hop: &[usize], hops: usize) -> std::result::Result<Disk, String> {
    let removed_vertices: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| hop[v] < hops).collect();
    let removed_faces: Vec<usize> = (0..mesh.num_faces())
        .filter(|&f| mesh.faces()[f].iter().any(|&v| hop[v] < hops))
        .collect();
    if removed_faces.len() == mesh.num_faces() {
        return Err(format!("a {hops}-hop disk covers the whole mesh"));
    }
    let removed: HashSet<usize> = removed_faces.iter().copied().collect();
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut edges = HashSet::new();
    for &f in &removed_faces {
        let face = mesh.faces()[f];
        for i in 0..3 {
            let (a, b) = (face[i], face[(i + 1) % 3]);
            edges.insert(edge_key(a, b));
            let e = mesh.edge_between(a, b).expect("face edge exists");
            let [f0, f1] = mesh.edge_faces(e);
            let other = if f0 == f { f1 } else { f0 };
            if !removed.contains(&other) && next.insert(a, b).is_some() {
                return Err(format!("{hops}-hop disk boundary pinches at vertex {a}"));
            }
        }
    }
    let start = *next.keys().min().ok_or("empty disk boundary")?;
    let mut boundary = vec![start];
    let mut cur = next[&start];
    while cur != start {
        boundary.push(cur);
        cur = *next.get(&cur).ok_or("open disk boundary")?;
        if boundary.len() > next.len() {
            return Err("disk boundary does not close".into());
        }
    }
    if boundary.len() != next.len() {
        return Err(format!("{hops}-hop disk has several boundary loops"));
    }
    let chi = (removed_vertices.len() + boundary.len()) as i64 - edges.len() as i64 + removed_faces.len() as i64;
    if chi != 1 {
        return Err(format!("{hops}-hop region has Euler characteristic {chi}, not a disk"));
    }
    Ok(Disk {
        removed_vertices,
        removed_faces,
        boundary,
    })
}

/// Intrinsic planar chart of the removed faces: the one-ring of `center`
/// by its corner angles (rescaled to sum to `2 pi`), further faces by
/// unfolding across placed edges.
fn unfold(mesh: &TriangleMesh, center: usize, faces: &[usize]) -> HashMap<usize, [f64; 2]> {
    let mut chart = HashMap::new();
    chart.insert(center, [0.0, 0.0]);
    let ring = mesh.ordered_one_ring(center);
    let mut corner = Vec::with_capacity(ring.len());
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        let f = *mesh
            .vertex_faces(center)
            .iter()
            .find(|&&f| {
                let face = mesh.faces()[f];
                let j = face.iter().position(|&x| x == center).unwrap();
                face[(j + 1) % 3] == a && face[(j + 2) % 3] == b
            })
            .expect("one-ring face");
        let j = mesh.faces()[f].iter().position(|&x| x == center).unwrap();
        corner.push(mesh.face_angles(f)[j]);
    }
    let total: f64 = corner.iter().sum();
    let mut theta = 0.0f64;
    for (i, &v) in ring.iter().enumerate() {
        let r = mesh.edge_length(center, v).unwrap();
        chart.insert(v, [r * theta.cos(), r * theta.sin()]);
        theta += corner[i] * 2.0 * PI / total;
    }
    let mut pending: Vec<usize> = faces.to_vec();
    loop {
        let before = pending.len();
        pending.retain(|&f| {
            let face = mesh.faces()[f];
            let placed: Vec<bool> = face.iter().map(|v| chart.contains_key(v)).collect();
            match placed.iter().filter(|&&p| p).count() {
                3 => false,
                2 => {
                    let i = (0..3).find(|&i| placed[i] && placed[(i + 1) % 3]).unwrap();
                    let (a, b, c) = (face[i], face[(i + 1) % 3], face[(i + 2) % 3]);
                    let (pa, pb) = (chart[&a], chart[&b]);
                    let lac = mesh.edge_length(a, c).unwrap();
                    let lbc = mesh.edge_length(b, c).unwrap();
                    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                    let d = dx.hypot(dy);
                    let x = (lac * lac - lbc * lbc + d * d) / (2.0 * d);
                    let y = (lac * lac - x * x).max(0.0).sqrt();
                    let (ux, uy) = (dx / d, dy / d);
                    chart.insert(c, [pa[0] + x * ux - y * uy, pa[1] + x * uy + y * ux]);
                    false
                }
                _ => true,
            }
        });
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    chart
}

fn check_star_shaped(pts: &[[f64; 2]]) -> std::result::Result<(), String> {
    let mut total = 0.0;
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        let step = (p[0] * q[1] - p[1] * q[0]).atan2(p[0] * q[0] + p[1] * q[1]);
        if !(step > 0.0) {
            return Err("boundary loop is not star-shaped in the chart".into());
        }
        total += step;
    }
    if (total - 2.0 * PI).abs() > 1e-6 {
        return Err(format!("boundary loop winds by {total:.6} rad"));
    }
    Ok(())
}

/// Vertex, face and length data under construction.
#[derive(Debug, Default)]
struct Assembly {
    positions: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    lengths: HashMap<(usize, usize), f64>,
    density: Vec<f64>,
    labels: Vec<u8>,
}

impl Assembly {
    fn push_vertex(&mut self, p: Point3, rho: f64, label: u8) -> usize {
        self.positions.push(p);
        self.density.push(rho);
        self.labels.push(label);
        self.positions.len() - 1
    }

    fn face(&mut self, f: [usize; 3]) {
        self.faces.push(f);
    }

    fn length(&mut self, a: usize, b: usize, l: f64) {
        self.lengths.insert(edge_key(a, b), l);
    }

    /// Appends `other`, identifying each `(other_vertex, self_vertex)` pair.
    fn merge(&mut self, other: Assembly, identify: &[(usize, usize)]) {
        let ident: HashMap<usize, usize> = identify.iter().copied().collect();
        let map: Vec<usize> = (0..other.positions.len())
            .map(|v| match ident.get(&v) {
                Some(&s) => s,
                None => self.push_vertex(other.positions[v], other.density[v], other.labels[v]),
            })
            .collect();
        for f in other.faces {
            self.faces.push([map[f[0]], map[f[1]], map[f[2]]]);
        }
        for ((a, b), l) in other.lengths {
            self.lengths.insert(edge_key(map[a], map[b]), l);
        }
    }

    fn translate(&mut self, shift: Point3) {
        for p in &mut self.positions {
            for i in 0..3 {
                p[i] += shift[i];
            }
        }
    }

    fn build(self) -> Result<(TriangleMesh, ConformalDensity, Vec<u8>)> {
        let mut b = MeshBuilder::new(self.positions, self.faces);
        b.lengths = self.lengths;
        let mesh = b.build()?;
        Ok((mesh, ConformalDensity::new(self.density)?, self.labels))
    }
}

/// Removes the cap disks from `mesh`, inserts graded rings joined to each
/// boundary loop, and returns the innermost ring of every cap (the seam).
fn assemble_cut(
    mesh: &TriangleMesh,
    density: &ConformalDensity,
    caps: &[&PreparedCap],
    label: u8,
) -> Result<(Assembly, Vec<Vec<usize>>)> {
    for (i, a) in caps.iter().enumerate() {
        let sa: HashSet<usize> = a.removed_vertices.iter().chain(&a.boundary).copied().collect();
        for b in &caps[i + 1..] {
            if b.removed_vertices.iter().chain(&b.boundary).any(|v| sa.contains(v)) {
                return Err(Error::OverlappingCaps {
                    a: a.center,
                    b: b.center,
                });
            }
        }
    }
    let removed_v: HashSet<usize> = caps.iter().flat_map(|c| c.removed_vertices.iter().copied()).collect();
    let removed_f: HashSet<usize> = caps.iter().flat_map(|c| c.removed_faces.iter().copied()).collect();

    let mut asm = Assembly::default();
    let map: Vec<usize> = (0..mesh.num_vertices())
        .map(|v| {
            if removed_v.contains(&v) {
                usize::MAX
            } else {
                asm.push_vertex(mesh.positions()[v], density.values()[v], label)
            }
        })
        .collect();
    for (f, face) in mesh.faces().iter().enumerate() {
        if removed_f.contains(&f) {
            continue;
        }
        let g = [map[face[0]], map[face[1]], map[face[2]]];
        asm.face(g);
        for i in 0..3 {
            let (a, b) = (face[i], face[(i + 1) % 3]);
            asm.length(map[a], map[b], mesh.edge_length(a, b).unwrap());
        }
    }

    let mut seams = Vec::with_capacity(caps.len());
    for cap in caps {
        let n = cap.resolution;
        let frame = tangent_frame(mesh, cap);
        let origin = mesh.positions()[cap.center];
        let mut rings: Vec<Vec<usize>> = Vec::new();
        let mut ring_chart: Vec<Vec<[f64; 2]>> = Vec::new();
        for &r in &cap.ring_radii {
            let mut ids = Vec::with_capacity(n);
            let mut pts = Vec::with_capacity(n);
            for i in 0..n {
                let t = 2.0 * PI * i as f64 / n as f64;
                let c = [r * t.cos(), r * t.sin()];
                ids.push(asm.push_vertex(embed(origin, &frame, c), cap.density, label));
                pts.push(c);
            }
            let chord = 2.0 * r * (PI / n as f64).sin();
            for i in 0..n {
                asm.length(ids[i], ids[(i + 1) % n], chord);
            }
            rings.push(ids);
            ring_chart.push(pts);
        }
        for j in 0..rings.len() - 1 {
            let (inn, out) = (&rings[j], &rings[j + 1]);
            let (ci, co) = (&ring_chart[j], &ring_chart[j + 1]);
            for i in 0..n {
                let i1 = (i + 1) % n;
                asm.faces.push([inn[i], out[i], out[i1]]);
                asm.faces.push([inn[i], out[i1], inn[i1]]);
                asm.lengths.insert(edge_key(inn[i], out[i]), chart_dist(ci[i], co[i]));
                asm.lengths.insert(edge_key(inn[i], out[i1]), chart_dist(ci[i], co[i1]));
            }
        }
        let last = rings.len() - 1;
        let loop_ids: Vec<usize> = cap.boundary.iter().map(|&v| map[v]).collect();
        zipper(
            &mut asm,
            &rings[last],
            &ring_chart[last],
            &loop_ids,
            &cap.boundary_chart,
        );
        seams.push(rings.swap_remove(0));
    }
    Ok((asm, seams))
}

fn chart_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Triangulates the annulus between an inner ring and the boundary loop by
/// merging their chart angles.
fn zipper(asm: &mut Assembly, inner: &[usize], inner_chart: &[[f64; 2]], outer: &[usize], outer_chart: &[[f64; 2]]) {
    let n = inner.len();
    let m = outer.len();
    let angle = |p: [f64; 2]| p[1].atan2(p[0]);
    let j0 = (0..m)
        .min_by(|&a, &b| angle(outer_chart[a]).abs().total_cmp(&angle(outer_chart[b]).abs()))
        .unwrap();
    // Unwrapped outer angles starting at j0.
    let mut phi = Vec::with_capacity(m + 1);
    let mut acc = angle(outer_chart[j0]);
    phi.push(acc);
    for t in 1..=m {
        let (p, q) = (outer_chart[(j0 + t - 1) % m], outer_chart[(j0 + t) % m]);
        acc += (p[0] * q[1] - p[1] * q[0]).atan2(p[0] * q[0] + p[1] * q[1]);
        phi.push(acc);
    }
    let theta = |i: usize| 2.0 * PI * i as f64 / n as f64;
    let (mut i, mut t) = (0, 0);
    while i < n || t < m {
        let advance_inner = if i == n {
            false
        } else if t == m {
            true
        } else {
            theta(i + 1) <= phi[t + 1]
        };
        let a = inner[i % n];
        let ca = inner_chart[i % n];
        let o = outer[(j0 + t) % m];
        let co = outer_chart[(j0 + t) % m];
        asm.length(a, o, chart_dist(ca, co));
        if advance_inner {
            asm.face([a, o, inner[(i + 1) % n]]);
            i += 1;
        } else {
            asm.face([a, o, outer[(j0 + t + 1) % m]]);
            t += 1;
        }
    }
}

/// Orthonormal tangent frame at the cap center for placing new vertices.
fn tangent_frame(mesh: &TriangleMesh, cap: &PreparedCap) -> [Point3; 2] {
    let p = mesh.positions()[cap.center];
    let mut normal = [0.0; 3];
    for &f in mesh.vertex_faces(cap.center) {
        let [a, b, c] = mesh.faces()[f].map(|v| mesh.positions()[v]);
        let u = sub(b, a);
        let w = sub(c, a);
        let cr = cross(u, w);
        for i in 0..3 {
            normal[i] += cr[i];
        }
    }
    let normal = normalize(normal);
    let ring0 = mesh.ordered_one_ring(cap.center)[0];
    let d = sub(mesh.positions()[ring0], p);
    let along = dot(d, normal);
    let t1 = normalize([
        d[0] - along * normal[0],
        d[1] - along * normal[1],
        d[2] - along * normal[2],
    ]);
    let t2 = cross(normal, t1);
    [t1, t2]
}

fn embed(origin: Point3, frame: &[Point3; 2], c: [f64; 2]) -> Point3 {
    [
        origin[0] + c[0] * frame[0][0] + c[1] * frame[1][0],
        origin[1] + c[0] * frame[0][1] + c[1] * frame[1][1],
        origin[2] + c[0] * frame[0][2] + c[1] * frame[1][2],
    ]
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: Point3) -> Point3 {
    let n = dot(a, a).sqrt();
    if n > 0.0 {
        [a[0] / n, a[1] / n, a[2] / n]
    } else {
        [1.0, 0.0, 0.0]
    }
}

fn bounding_box(p: &[Point3]) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for q in p {
        for i in 0..3 {
            lo[i] = lo[i].min(q[i]);
            hi[i] = hi[i].max(q[i]);
        }
    }
    (lo, hi)
}

/// Mesh, density and component labels produced by a surgery, with the
/// parameters that produced it.
#[derive(Debug, Clone)]
pub struct SurgeryOutput {
    pub mesh: TriangleMesh,
    pub density: ConformalDensity,
    /// [`HOST`] or [`GUEST`] per vertex.
    pub labels: Vec<u8>,
    pub spec: serde_json::Value,
}

impl SurgeryOutput {
    pub fn genus(&self) -> usize {
        self.mesh.genus()
    }

    /// Total mass of the vertices carrying `label` under `density`.
    pub fn component_mass(&self, density: &ConformalDensity, label: u8) -> f64 {
        let shares = self.mesh.vertex_area_shares();
        shares
            .iter()
            .zip(density.values())
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|((a, r), _)| a * r)
            .sum()
    }
}

/// Connected sum of two surfaces through a neck of radius `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct GlueSpec<'a> {
    pub host: &'a TriangleMesh,
    pub host_density: &'a ConformalDensity,
    pub host_center: usize,
    pub guest: &'a TriangleMesh,
    pub guest_density: &'a ConformalDensity,
    pub guest_center: usize,
    pub epsilon: f64,
    pub resolution: usize,
}

/// Removes a disk of radius about `epsilon` from each surface and identifies
/// the two boundary circles with reversed orientation.
pub fn glue_surfaces(spec: &GlueSpec<'_>) -> Result<SurgeryOutput> {
    let guard = epsilon_guard(spec.host).min(epsilon_guard(spec.guest));
    if !(spec.epsilon > 0.0) || spec.epsilon >= guard {
        return Err(Error::Guard(format!(
            "neck radius {} outside (0, {guard:.4}) for the smaller surface",
            spec.epsilon
        )));
    }
    let host_cap = prepare_cap(
        spec.host,
        spec.host_density,
        spec.host_center,
        spec.epsilon,
        spec.resolution,
    )?;
    let guest_cap = prepare_cap(
        spec.guest,
        spec.guest_density,
        spec.guest_center,
        spec.epsilon,
        spec.resolution,
    )?;
    glue_prepared(
        (spec.host, spec.host_density, &host_cap),
        (spec.guest, spec.guest_density, &guest_cap),
    )
}

/// Glues two already prepared caps.
pub fn glue_prepared(
    host: (&TriangleMesh, &ConformalDensity, &PreparedCap),
    guest: (&TriangleMesh, &ConformalDensity, &PreparedCap),
) -> Result<SurgeryOutput> {
    let (hm, hd, hc) = host;
    let (gm, gd, gc) = guest;
    if hc.resolution != gc.resolution {
        return Err(Error::Preparation(format!(
            "seam rings have {} and {} vertices",
            hc.resolution, gc.resolution
        )));
    }
    if (hc.epsilon - gc.epsilon).abs() > 1e-12 * hc.epsilon {
        return Err(Error::Preparation(format!(
            "seam radii differ: {} and {}",
            hc.epsilon, gc.epsilon
        )));
    }
    let (mut a, hs) = assemble_cut(hm, hd, &[hc], HOST)?;
    let (mut b, gs) = assemble_cut(gm, gd, &[gc], GUEST)?;
    let (_, hhi) = bounding_box(&a.positions);
    let (glo, _) = bounding_box(&b.positions);
    b.translate([hhi[0] - glo[0] + 0.5, 0.0, 0.0]);
    let n = hc.resolution;
    let identify: Vec<(usize, usize)> = (0..n).map(|i| (gs[0][i], hs[0][(n - i) % n])).collect();
    for &v in &hs[0] {
        a.labels[v] = GUEST;
    }
    a.merge(b, &identify);
    let (mesh, density, labels) = a.build()?;
    Ok(SurgeryOutput {
        mesh,
        density,
        labels,
        spec: json!({
            "surgery": "glue",
            "host_center": hc.center,
            "guest_center": gc.center,
            "epsilon": hc.epsilon,
            "resolution": n,
            "host_hops": hc.hops,
            "guest_hops": gc.hops,
        }),
    })
}

/// Thin handle joining the caps at `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandleSpec {
    pub a: usize,
    pub b: usize,
    pub epsilon: f64,
    pub length: f64,
    pub resolution: usize,
}

/// Removes disks at `a` and `b` and joins their seams by a flat cylinder of
/// circumference `resolution * 2 eps sin(pi / resolution)` and length `l`,
/// cut into `max(4, ceil(l / eps))` rows.
pub fn attach_handle(mesh: &TriangleMesh, density: &ConformalDensity, spec: &HandleSpec) -> Result<SurgeryOutput> {
    let HandleSpec {
        a,
        b,
        epsilon,
        length,
        resolution,
    } = *spec;
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "handle length {length} must be positive"
        )));
    }
    let aspect = epsilon / length;
    if !(1e-3..=10.0).contains(&aspect) {
        return Err(Error::Guard(format!(
            "handle aspect eps/l = {aspect:.3e} outside [1e-3, 10]"
        )));
    }
    if a == b {
        return Err(Error::OverlappingCaps { a, b });
    }
    let ca = prepare_cap(mesh, density, a, epsilon, resolution)?;
    let cb = prepare_cap(mesh, density, b, epsilon, resolution)?;
    let (mut asm, seams) = assemble_cut(mesh, density, &[&ca, &cb], HOST)?;
    let n = resolution;
    let rows = ((length / epsilon).ceil() as usize).max(4);
    let c = 2.0 * epsilon * (PI / n as f64).sin();
    let h = length / rows as f64;
    let diag = c.hypot(h);
    let end: Vec<usize> = (0..n).map(|i| seams[1][(n - i) % n]).collect();
    let mut prev = seams[0].clone();
    for t in 1..=rows {
        let row: Vec<usize> = if t == rows {
            end.clone()
        } else {
            let s = t as f64 / rows as f64;
            let rho = (1.0 - s) * ca.density + s * cb.density;
            (0..n)
                .map(|i| {
                    let p = asm.positions[seams[0][i]];
                    let q = asm.positions[end[i]];
                    let mid = [
                        (1.0 - s) * p[0] + s * q[0],
                        (1.0 - s) * p[1] + s * q[1],
                        (1.0 - s) * p[2] + s * q[2],
                    ];
                    asm.push_vertex(mid, rho, GUEST)
                })
                .collect()
        };
        for i in 0..n {
            let i1 = (i + 1) % n;
            asm.face([prev[i], prev[i1], row[i1]]);
            asm.face([prev[i], row[i1], row[i]]);
            asm.length(prev[i], row[i], h);
            asm.length(prev[i], row[i1], diag);
            asm.length(row[i], row[i1], c);
        }
        prev = row;
    }
    let (mesh, density, labels) = asm.build()?;
    Ok(SurgeryOutput {
        mesh,
        density,
        labels,
        spec: json!({
            "surgery": "handle",
            "a": a,
            "b": b,
            "epsilon": epsilon,
            "length": length,
            "resolution": n,
            "rows": rows,
        }),
    })
}

/// Density of `output` with the guest component scaled by `scale^2` and the
/// first host ring next to it by `(1 + scale^2) / 2`.
pub fn collapse_component(output: &SurgeryOutput, scale: f64) -> Result<ConformalDensity> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "collapse scale {scale} must be positive"
        )));
    }
    let labels = &output.labels;
    if labels.len() != output.mesh.num_vertices() || !labels.contains(&GUEST) || !labels.contains(&HOST) {
        return Err(Error::InvalidArgument(
            "mesh carries no host/guest component labels".into(),
        ));
    }
    let s2 = scale * scale;
    let mut rho = output.density.values().to_vec();
    let mut near = vec![false; rho.len()];
    for v in 0..rho.len() {
        if labels[v] == GUEST {
            rho[v] *= s2;
            for (w, _) in output.mesh.neighbors(v) {
                if labels[w] == HOST {
                    near[w] = true;
                }
            }
        }
    }
    for v in 0..rho.len() {
        if near[v] {
            rho[v] *= 0.5 * (1.0 + s2);
        }
    }
    ConformalDensity::new(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_flat_torus, build_icosphere, geodesic_distances, Lattice};

    fn uniform(m: &TriangleMesh) -> ConformalDensity {
        ConformalDensity::uniform(m.num_vertices())
    }

    fn glue(a: &TriangleMesh, b: &TriangleMesh, eps: f64) -> Result<SurgeryOutput> {
        let (da, db) = (uniform(a), uniform(b));
        glue_surfaces(&GlueSpec {
            host: a,
            host_density: &da,
            host_center: 0,
            guest: b,
            guest_density: &db,
            guest_center: 0,
            epsilon: eps,
            resolution: RING_VERTICES,
        })
    }

    #[test]
    fn cap_rings_and_radius() {
        let m = build_icosphere(3).unwrap();
        for eps in [0.05, 0.1, 0.2] {
            let cap = prepare_cap(&m, &uniform(&m), 0, eps, 16).unwrap();
            assert!(cap.boundary_radius >= 1.5 * eps);
            assert_eq!(cap.ring_radii[0], eps);
            assert!(*cap.ring_radii.last().unwrap() < 0.75 * cap.boundary_radius);
        }
    }

    #[test]
    fn two_spheres_give_a_sphere() {
        let m = build_icosphere(2).unwrap();
        let out = glue(&m, &m, 0.1).unwrap();
        assert_eq!(out.genus(), 0);
        assert!(out.labels.contains(&HOST) && out.labels.contains(&GUEST));
    }

    #[test]
    fn sphere_and_torus_give_a_torus() {
        let s = build_icosphere(2).unwrap();
        let t = build_flat_torus(Lattice::equilateral().scaled(4.0), 24).unwrap();
        assert_eq!(glue(&t, &s, 0.1).unwrap().genus(), 1);
        assert_eq!(glue(&s, &t, 0.1).unwrap().genus(), 1);
    }

    #[test]
    fn glued_area_accounts_for_two_disks() {
        let m = build_icosphere(3).unwrap();
        let eps = 0.05;
        let out = glue(&m, &m, eps).unwrap();
        let total = out.mesh.total_area();
        assert!((total / (2.0 * m.total_area()) - 1.0).abs() < 0.01);
    }

    #[test]
    fn guard_and_preparation_errors() {
        let m = build_icosphere(2).unwrap();
        assert!(matches!(glue(&m, &m, 0.5), Err(Error::Guard(_))));
        let rho = ConformalDensity::new(m.positions().iter().map(|p| 2.0 + p[0]).collect()).unwrap();
        assert!(matches!(prepare_cap(&m, &rho, 0, 0.1, 16), Err(Error::Preparation(_))));
        let a = prepare_cap(&m, &uniform(&m), 0, 0.1, 16).unwrap();
        let b = prepare_cap(&m, &uniform(&m), 0, 0.1, 12).unwrap();
        let d = uniform(&m);
        assert!(matches!(
            glue_prepared((&m, &d, &a), (&m, &d, &b)),
            Err(Error::Preparation(_))
        ));
    }

    #[test]
    fn handles_raise_genus() {
        let s = build_icosphere(3).unwrap();
        let far = {
            let d = geodesic_distances(&s, 0);
            (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap()
        };
        let spec = HandleSpec {
            a: 0,
            b: far,
            epsilon: 0.1,
            length: 0.5,
            resolution: 16,
        };
        let out = attach_handle(&s, &uniform(&s), &spec).unwrap();
        assert_eq!(out.genus(), 1);
        let t = build_flat_torus(Lattice::equilateral().scaled(2.0), 24).unwrap();
        let d = geodesic_distances(&t, 0);
        let far = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        let spec = HandleSpec {
            a: 0,
            b: far,
            epsilon: 0.05,
            length: 0.5,
            resolution: 16,
        };
        assert_eq!(attach_handle(&t, &uniform(&t), &spec).unwrap().genus(), 2);
    }

    #[test]
    fn handle_area_shrinks_with_eps() {
        let t = build_flat_torus(Lattice::equilateral().scaled(2.0), 32).unwrap();
        let d = geodesic_distances(&t, 0);
        let far = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.08, 0.04, 0.02] {
            let spec = HandleSpec {
                a: 0,
                b: far,
                epsilon: eps,
                length: 0.5,
                resolution: 16,
            };
            let out = attach_handle(&t, &uniform(&t), &spec).unwrap();
            let excess = (out.mesh.total_area() - t.total_area()).abs();
            assert!(excess < prev);
            assert!(excess <= 2.0 * PI * eps * 0.5 * 1.05 + 4.0 * PI * eps * eps);
            prev = excess;
        }
    }

    #[test]
    fn overlapping_caps_and_aspect_guard() {
        let s = build_icosphere(3).unwrap();
        let nb = s.neighbors(0)[0].0;
        let spec = HandleSpec {
            a: 0,
            b: nb,
            epsilon: 0.05,
            length: 0.5,
            resolution: 16,
        };
        assert!(matches!(
            attach_handle(&s, &uniform(&s), &spec),
            Err(Error::OverlappingCaps { .. })
        ));
        let spec = HandleSpec {
            a: 0,
            b: 100,
            epsilon: 0.1,
            length: 1e-3,
            resolution: 16,
        };
        assert!(matches!(attach_handle(&s, &uniform(&s), &spec), Err(Error::Guard(_))));
    }

    #[test]
    fn collapse_scales_guest_mass_exactly() {
        let m = build_icosphere(2).unwrap();
        let out = glue(&m, &m, 0.1).unwrap();
        let same = collapse_component(&out, 1.0).unwrap();
        assert_eq!(same.values(), out.density.values());
        let c = collapse_component(&out, 0.1).unwrap();
        let before = out.component_mass(&out.density, GUEST);
        let after = out.component_mass(&c, GUEST);
        assert!((after / before - 0.01).abs() < 1e-12);
        let mut unlabeled = out.clone();
        unlabeled.labels = vec![HOST; out.labels.len()];
        assert!(collapse_component(&unlabeled, 0.5).is_err());
    }
}
