//! Small fixed-size vector helpers for flat simplices embedded in R^2 or R^3.
//!
//! Points are always stored with three components; two-dimensional meshes
//! carry a zero third coordinate.

pub type Point = [f64; 3];

/// Absolute tolerance for point coincidence in unit-box coordinates.
pub const GEOM_TOL: f64 = 1e-12;

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

#[inline]
pub fn midpoint(a: &Point, b: &Point) -> Point {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

pub fn normalize(a: &Point) -> Point {
    let n = norm(a);
    if n == 0.0 {
        *a
    } else {
        scale(a, 1.0 / n)
    }
}

pub fn centroid(points: &[Point]) -> Point {
    let mut c = [0.0; 3];
    for p in points {
        c = add(&c, p);
    }
    scale(&c, 1.0 / points.len() as f64)
}

/// Orthonormal basis (Gram-Schmidt) of the span of `vectors`, skipping
/// numerically dependent directions.
pub fn orthonormal_basis(vectors: &[Point]) -> Vec<Point> {
    let mut basis: Vec<Point> = Vec::new();
    for v in vectors {
        let mut w = *v;
        for b in &basis {
            w = sub(&w, &scale(b, dot(&w, b)));
        }
        let n = norm(&w);
        if n > 1e-14 * norm(v).max(1e-300) && n > 0.0 {
            basis.push(scale(&w, 1.0 / n));
        }
    }
    basis
}

/// Tangent basis of the affine hull of a simplex.
pub fn simplex_frame(points: &[Point]) -> Vec<Point> {
    let edges: Vec<Point> = points[1..].iter().map(|p| sub(p, &points[0])).collect();
    orthonormal_basis(&edges)
}

/// d-dimensional measure of a simplex given by d+1 points. A single point
/// has counting measure one.
pub fn simplex_measure(points: &[Point]) -> f64 {
    match points.len() {
        1 => 1.0,
        2 => dist(&points[0], &points[1]),
        3 => 0.5 * norm(&cross(&sub(&points[1], &points[0]), &sub(&points[2], &points[0]))),
        4 => {
            let a = sub(&points[1], &points[0]);
            let b = sub(&points[2], &points[0]);
            let c = sub(&points[3], &points[0]);
            dot(&a, &cross(&b, &c)).abs() / 6.0
        }
        n => panic!("unsupported simplex with {n} vertices"),
    }
}

/// Unit outward normal of the facet opposite vertex `opposite` of a simplex,
/// taken within the affine hull of the simplex.
pub fn outward_normal(points: &[Point], opposite: usize) -> Point {
    let facet: Vec<Point> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != opposite)
        .map(|(_, p)| *p)
        .collect();
    let mut w = sub(&facet[0], &points[opposite]);
    for b in simplex_frame(&facet) {
        w = sub(&w, &scale(&b, dot(&w, &b)));
    }
    normalize(&w)
}

/// Distance from `x` to the affine hull spanned by `points`.
pub fn distance_to_affine_hull(x: &Point, points: &[Point]) -> f64 {
    let mut w = sub(x, &points[0]);
    for b in simplex_frame(points) {
        w = sub(&w, &scale(&b, dot(&w, &b)));
    }
    norm(&w)
}

/// Barycentric coordinates of `x` projected onto the affine hull of the
/// simplex.
pub fn barycentric(x: &Point, points: &[Point]) -> Vec<f64> {
    let d = points.len() - 1;
    if d == 0 {
        return vec![1.0];
    }
    // Solve the normal equations G t = E^T (x - p0) with E = [p_i - p0].
    let edges: Vec<Point> = points[1..].iter().map(|p| sub(p, &points[0])).collect();
    let r = sub(x, &points[0]);
    let g = nalgebra::DMatrix::from_fn(d, d, |i, j| dot(&edges[i], &edges[j]));
    let rhs = nalgebra::DVector::from_fn(d, |i, _| dot(&edges[i], &r));
    let t = g
        .lu()
        .solve(&rhs)
        .expect("degenerate simplex in barycentric coordinates");
    let mut lambda = Vec::with_capacity(d + 1);
    lambda.push(1.0 - t.iter().sum::<f64>());
    lambda.extend(t.iter().copied());
    lambda
}

/// Whether `x` lies in the closed simplex, up to `tol` in distance.
pub fn simplex_contains(x: &Point, points: &[Point], tol: f64) -> bool {
    if points.len() == 1 {
        return dist(x, &points[0]) <= tol;
    }
    if distance_to_affine_hull(x, points) > tol {
        return false;
    }
    let diam = simplex_diameter(points).max(1e-300);
    barycentric(x, points).iter().all(|&l| l >= -tol / diam)
}

pub fn simplex_diameter(points: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max(dist(&points[i], &points[j]));
        }
    }
    d
}

/// Euclidean distance from `x` to the closed simplex.
pub fn distance_to_simplex(x: &Point, points: &[Point]) -> f64 {
    match points.len() {
        1 => dist(x, &points[0]),
        2 => distance_to_segment(x, &points[0], &points[1]),
        _ => {
            let lambda = barycentric(x, points);
            if lambda.iter().all(|&l| l >= 0.0) {
                return distance_to_affine_hull(x, points);
            }
            // Minimum over the boundary facets.
            (0..points.len())
                .map(|skip| {
                    let facet: Vec<Point> = points
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != skip)
                        .map(|(_, p)| *p)
                        .collect();
                    distance_to_simplex(x, &facet)
                })
                .fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn distance_to_segment(x: &Point, a: &Point, b: &Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return dist(x, a);
    }
    let t = (dot(&sub(x, a), &ab) / len2).clamp(0.0, 1.0);
    dist(x, &add(a, &scale(&ab, t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_of_unit_simplices() {
        let o = [0.0, 0.0, 0.0];
        let ex = [1.0, 0.0, 0.0];
        let ey = [0.0, 1.0, 0.0];
        let ez = [0.0, 0.0, 1.0];
        assert_eq!(simplex_measure(&[o]), 1.0);
        assert_eq!(simplex_measure(&[o, ex]), 1.0);
        assert_eq!(simplex_measure(&[o, ex, ey]), 0.5);
        assert!((simplex_measure(&[o, ex, ey, ez]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn outward_normal_of_triangle_in_3d() {
        let pts = [[0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [0.0, 1.0, 0.5]];
        // facet opposite vertex 0 is the hypotenuse
        let n = outward_normal(&pts, 0);
        let s = 1.0 / 2f64.sqrt();
        assert!((n[0] - s).abs() < 1e-14 && (n[1] - s).abs() < 1e-14 && n[2].abs() < 1e-14);
        // 1D element: facet opposite vertex 0 is the point x1
        let seg = [[0.2, 0.0, 0.0], [0.7, 0.0, 0.0]];
        assert_eq!(outward_normal(&seg, 0), [1.0, 0.0, 0.0]);
        assert_eq!(outward_normal(&seg, 1), [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn point_simplex_distance() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(distance_to_simplex(&[0.2, 0.2, 0.0], &tri), 0.0);
        assert!((distance_to_simplex(&[-0.5, 0.2, 0.0], &tri) - 0.5).abs() < 1e-14);
        assert!(simplex_contains(&[0.5, 0.5, 0.0], &tri, 1e-12));
        assert!(!simplex_contains(&[0.6, 0.5, 0.0], &tri, 1e-12));
    }
}
