//! Direction meshes on the unit sphere with a chordal covering radius.

use std::collections::HashMap;

pub struct Mesh {
    pub directions: Vec<Vec<f64>>,
    /// Every unit vector lies within this Euclidean distance of some direction.
    pub rho: f64,
}

/// Icosphere of the given subdivision level (N = 3) or a uniform circle (N = 2).
pub fn mesh(dim: usize, level: usize) -> Mesh {
    match dim {
        2 => {
            let m = 12 << level;
            let directions = (0..m)
                .map(|j| {
                    let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            Mesh { directions, rho: 2.0 * (std::f64::consts::PI / (2.0 * m as f64)).sin() }
        }
        3 => icosphere(level),
        _ => panic!("direction meshes exist only for N = 2, 3"),
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

fn icosphere(level: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let mut rho = 0.0f64;
    for [a, b, c] in &faces {
        let (p, q, r) = (verts[*a], verts[*b], verts[*c]);
        let sub = |x: [f64; 3], y: [f64; 3]| [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        let len = |x: [f64; 3]| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let (la, lb, lc) = (len(sub(q, r)), len(sub(p, r)), len(sub(p, q)));
        let u = sub(q, p);
        let v = sub(r, p);
        let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let area2 = len(cross);
        let circum = la * lb * lc / (2.0 * area2);
        let plane = (cross[0] * p[0] + cross[1] * p[1] + cross[2] * p[2]).abs() / area2;
        rho = rho.max(circum + 1.0 - plane);
    }
    Mesh { directions: verts.into_iter().map(|v| v.to_vec()).collect(), rho }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_sizes() {
        assert_eq!(mesh(3, 0).directions.len(), 12);
        assert_eq!(mesh(3, 5).directions.len(), 10242);
    }

    #[test]
    fn covering_radius_is_respected() {
        let m = mesh(3, 3);
        let mut s = 0.3f64;
        for _ in 0..2000 {
            s = (s * 9.17 + 0.123).fract();
            let z = 2.0 * s - 1.0;
            let t = 2.0 * std::f64::consts::PI * (s * 37.0).fract();
            let r = (1.0 - z * z).sqrt();
            let u = [r * t.cos(), r * t.sin(), z];
            let d = m
                .directions
                .iter()
                .map(|v| ((v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(d <= m.rho);
        }
    }
}
