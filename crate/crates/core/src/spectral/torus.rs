use std::f64::consts::PI;

use crate::mesh::Lattice;

/// Normalized eigenvalues `4 pi^2 |g*|^2 * area` of the flat torus
/// `R^2 / lattice`, over dual-lattice vectors `g*`, sorted with
/// multiplicity; returns `count + 1` values starting at `0`.
pub fn flat_torus_closed_form(lattice: &Lattice, count: usize) -> Vec<f64> {
    let dual = lattice.dual();
    // Smallest singular value of the dual basis bounds |m e1* + n e2*| from
    // below by s_min * |(m, n)|.
    let (a, b, c, d) = (dual.e1[0], dual.e2[0], dual.e1[1], dual.e2[1]);
    let frob = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let s_min2 = 0.5 * (frob - (frob * frob - 4.0 * det * det).max(0.0).sqrt());
    let area = lattice.covolume();

    let mut radius = 2i64;
    loop {
        let mut norms = Vec::new();
        for m in -radius..=radius {
            for n in -radius..=radius {
                let x = m as f64 * dual.e1[0] + n as f64 * dual.e2[0];
                let y = m as f64 * dual.e1[1] + n as f64 * dual.e2[1];
                norms.push(x * x + y * y);
            }
        }
        norms.sort_by(f64::total_cmp);
        // Everything with |g*|^2 below s_min^2 * radius^2 has been enumerated.
        let complete = s_min2 * (radius * radius) as f64;
        if norms.len() > count && norms[count] < complete {
            return norms[..=count].iter().map(|q| 4.0 * PI * PI * q * area).collect();
        }
        radius *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_lattice_first_level() {
        let v = flat_torus_closed_form(&Lattice::square(), 8);
        assert_eq!(v[0], 0.0);
        for x in &v[1..=4] {
            assert!((x - 4.0 * PI * PI).abs() < 1e-12);
        }
        // Next level |(1,1)|^2 = 2.
        for x in &v[5..=8] {
            assert!((x - 8.0 * PI * PI).abs() < 1e-11);
        }
    }

    #[test]
    fn equilateral_lattice_sixfold() {
        let v = flat_torus_closed_form(&Lattice::equilateral(), 7);
        let target = 8.0 * PI * PI / 3f64.sqrt();
        for x in &v[1..=6] {
            assert!((x - target).abs() < 1e-11 * target);
        }
        assert!(v[7] > target * 2.9);
    }

    #[test]
    fn normalized_values_are_scale_free() {
        let l = Lattice::new([1.0, 0.2], [0.3, 1.7]).unwrap();
        let a = flat_torus_closed_form(&l, 10);
        let b = flat_torus_closed_form(&l.scaled(3.0), 10);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }
}
