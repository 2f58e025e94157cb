//! Surface samplers for the eight procedural shape classes.
//!
//! Every sampler draws its own shape parameters from the stream, so two
//! samples of the same class differ in proportions as well as in points.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::Point;
use crate::rng::Stream;

/// Range of the per-axis stretch applied to every generated shape.
pub const STRETCH: (f64, f64) = (0.8, 1.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    Tetrahedron,
    Disc,
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 8] = [
        Shape::Sphere,
        Shape::Cube,
        Shape::Cylinder,
        Shape::Cone,
        Shape::Torus,
        Shape::Tetrahedron,
        Shape::Disc,
        Shape::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Cone => "cone",
            Shape::Torus => "torus",
            Shape::Tetrahedron => "tetrahedron",
            Shape::Disc => "disc",
            Shape::Helix => "helix",
        }
    }

    /// Surface sample with per-sample proportions and a mild per-axis stretch.
    pub fn sample(self, n: usize, rng: &mut Stream) -> Vec<Point> {
        let stretch: [f64; 3] = std::array::from_fn(|_| rng.random_range(STRETCH.0..STRETCH.1));
        let mut pts = self.sample_shape(n, rng);
        for p in &mut pts {
            for d in 0..3 {
                p[d] *= stretch[d];
            }
        }
        pts
    }

    fn sample_shape(self, n: usize, rng: &mut Stream) -> Vec<Point> {
        match self {
            Shape::Sphere => (0..n).map(|_| unit_vector(rng)).collect(),
            Shape::Cube => {
                let dims: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.8..1.2));
                sample_box(dims, n, rng)
            }
            Shape::Cylinder => {
                let aspect = rng.random_range(0.5..2.0);
                sample_cylinder(1.0, 2.0 * aspect, n, rng)
            }
            Shape::Cone => {
                let height = rng.random_range(1.0..2.5);
                let top = rng.random_range(0.0..0.6);
                sample_frustum(1.0, top, height, n, rng)
            }
            Shape::Torus => {
                let ratio = rng.random_range(0.2..0.5);
                sample_torus(1.0, ratio, n, rng)
            }
            Shape::Tetrahedron => {
                let s = 1.0 / 3f64.sqrt();
                let mut v = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
                for p in &mut v {
                    for c in p.iter_mut() {
                        *c += rng.random_range(-0.1..0.1);
                    }
                }
                let faces = [[v[0], v[1], v[2]], [v[0], v[1], v[3]], [v[0], v[2], v[3]], [v[1], v[2], v[3]]];
                sample_triangles(&faces, n, rng)
            }
            Shape::Disc => {
                let thickness = rng.random_range(0.05..0.35);
                sample_cylinder(1.0, thickness, n, rng)
            }
            Shape::Helix => {
                let turns = rng.random_range(2.0..4.0);
                let height = rng.random_range(1.5..3.0);
                let tube = rng.random_range(0.05..0.1);
                sample_helix(turns, height, tube, n, rng)
            }
        }
    }
}

fn unit_vector(rng: &mut Stream) -> Point {
    loop {
        let v: Point = std::array::from_fn(|_| StandardNormal.sample(rng));
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-9 {
            return v.map(|c| c / norm);
        }
    }
}

/// Picks an index with probability proportional to `weights`.
fn pick(weights: &[f64], rng: &mut Stream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn sample_box(dims: [f64; 3], n: usize, rng: &mut Stream) -> Vec<Point> {
    let [a, b, c] = dims;
    // faces normal to x, y, z
    let areas = [b * c, a * c, a * b];
    (0..n)
        .map(|_| {
            let axis = pick(&areas, rng);
            let mut p: Point = std::array::from_fn(|d| rng.random_range(-dims[d] / 2.0..dims[d] / 2.0));
            p[axis] = if rng.random_bool(0.5) { dims[axis] / 2.0 } else { -dims[axis] / 2.0 };
            p
        })
        .collect()
}

fn disc_point(radius: f64, rng: &mut Stream) -> (f64, f64) {
    let r = radius * rng.random_range(0.0f64..1.0).sqrt();
    let t = rng.random_range(0.0..TAU);
    (r * t.cos(), r * t.sin())
}

fn sample_cylinder(radius: f64, height: f64, n: usize, rng: &mut Stream) -> Vec<Point> {
    let areas = [TAU * radius * height, PI * radius * radius, PI * radius * radius];
    (0..n)
        .map(|_| match pick(&areas, rng) {
            0 => {
                let t = rng.random_range(0.0..TAU);
                [radius * t.cos(), radius * t.sin(), rng.random_range(-height / 2.0..height / 2.0)]
            }
            cap => {
                let (x, y) = disc_point(radius, rng);
                [x, y, if cap == 1 { height / 2.0 } else { -height / 2.0 }]
            }
        })
        .collect()
}

/// Cone with its apex cut off; `top` is the top radius as a fraction of the base.
fn sample_frustum(radius: f64, top: f64, height: f64, n: usize, rng: &mut Stream) -> Vec<Point> {
    let r_top = radius * top;
    let slant = ((radius - r_top).powi(2) + height * height).sqrt();
    let areas = [PI * (radius + r_top) * slant, PI * radius * radius, PI * r_top * r_top];
    (0..n)
        .map(|_| match pick(&areas, rng) {
            0 => {
                // lateral density grows linearly with the radius
                let (a, b) = (r_top * r_top, radius * radius);
                let r = (a + rng.random_range(0.0f64..1.0) * (b - a)).sqrt();
                let t = rng.random_range(0.0..TAU);
                let z = if radius > r_top { height * (radius - r) / (radius - r_top) } else { 0.0 };
                [r * t.cos(), r * t.sin(), z]
            }
            1 => {
                let (x, y) = disc_point(radius, rng);
                [x, y, 0.0]
            }
            _ => {
                let (x, y) = disc_point(r_top, rng);
                [x, y, height]
            }
        })
        .collect()
}

fn sample_torus(major: f64, ratio: f64, n: usize, rng: &mut Stream) -> Vec<Point> {
    let minor = major * ratio;
    (0..n)
        .map(|_| {
            // area element is proportional to (R + r cos phi)
            let phi = loop {
                let phi = rng.random_range(0.0..TAU);
                if rng.random_range(0.0..major + minor) < major + minor * phi.cos() {
                    break phi;
                }
            };
            let theta = rng.random_range(0.0..TAU);
            let ring = major + minor * phi.cos();
            [ring * theta.cos(), ring * theta.sin(), minor * phi.sin()]
        })
        .collect()
}

fn sample_triangles(faces: &[[Point; 3]], n: usize, rng: &mut Stream) -> Vec<Point> {
    let area = |f: &[Point; 3]| {
        let u: Point = std::array::from_fn(|d| f[1][d] - f[0][d]);
        let v: Point = std::array::from_fn(|d| f[2][d] - f[0][d]);
        let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    };
    let areas: Vec<f64> = faces.iter().map(area).collect();
    (0..n)
        .map(|_| {
            let f = &faces[pick(&areas, rng)];
            let (mut a, mut b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            std::array::from_fn(|d| f[0][d] + a * (f[1][d] - f[0][d]) + b * (f[2][d] - f[0][d]))
        })
        .collect()
}

fn sample_helix(turns: f64, height: f64, tube: f64, n: usize, rng: &mut Stream) -> Vec<Point> {
    // constant-speed parametrization, so uniform t is uniform in arc length
    (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..1.0);
            let a = TAU * turns * t;
            let center = [a.cos(), a.sin(), height * (t - 0.5)];
            let offset = unit_vector(rng).map(|c| c * tube);
            std::array::from_fn(|d| center[d] + offset[d])
        })
        .collect()
}
