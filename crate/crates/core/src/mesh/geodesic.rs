use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::TriangleMesh;

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Graph-geodesic (Dijkstra over edge lengths) distance from `source` to
/// every vertex.
pub fn geodesic_distances(mesh: &TriangleMesh, source: usize) -> Vec<f64> {
    let n = mesh.num_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    let lengths = mesh.edge_lengths();
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for (w, e) in mesh.neighbors(v) {
            let nd = d + lengths[e];
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Entry(nd, w));
            }
        }
    }
    dist
}

/// Vertices within graph-geodesic distance `radius` of `center`, sorted.
/// The result is connected (it is a sublevel set of a shortest-path tree)
/// and always contains `center`.
pub fn geodesic_ball_vertices(mesh: &TriangleMesh, center: usize, radius: f64) -> Vec<usize> {
    let radius = radius.max(0.0);
    geodesic_distances(mesh, center)
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= radius)
        .map(|(v, _)| v)
        .collect()
}
