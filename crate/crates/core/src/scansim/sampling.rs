//! Seeded uniform surface sampling of simple primitives.

use rand::Rng;

use crate::geom::{Point3, RigidTransform, Vec3};

/// Uniform samples on the surface of an axis-aligned box centred at the
/// origin with the given half extents, then moved by `pose`.
pub(crate) fn box_surface(rng: &mut impl Rng, half: Vec3, pose: &RigidTransform, n: usize) -> Vec<Point3> {
    let faces = [
        (0usize, 4.0 * half.y * half.z),
        (1, 4.0 * half.x * half.z),
        (2, 4.0 * half.x * half.y),
    ];
    let total: f64 = 2.0 * faces.iter().map(|f| f.1).sum::<f64>();
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 2;
            for &(a, area) in &faces {
                if pick < 2.0 * area {
                    axis = a;
                    break;
                }
                pick -= 2.0 * area;
            }
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut p = Vec3::new(
                rng.random_range(-half.x..=half.x),
                rng.random_range(-half.y..=half.y),
                rng.random_range(-half.z..=half.z),
            );
            p[axis] = sign * half[axis];
            pose.apply(&Point3::from(p))
        })
        .collect()
}

/// Surface of a regular hexagonal prism (axis z, circumradius `r`, height `h`,
/// base at z = 0), moved by `pose`.
pub(crate) fn hex_prism_surface(rng: &mut impl Rng, r: f64, h: f64, pose: &RigidTransform, n: usize) -> Vec<Point3> {
    let apothem = r * (std::f64::consts::PI / 6.0).cos();
    let cap_area = 1.5 * 3f64.sqrt() * r * r;
    let side_area = 6.0 * r * h;
    let inside = |x: f64, y: f64| {
        (0..6).all(|k| {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            x * a.cos() + y * a.sin() <= apothem
        })
    };
    (0..n)
        .map(|_| {
            let pick = rng.random_range(0.0..(2.0 * cap_area + side_area));
            let p = if pick < 2.0 * cap_area {
                let z = if pick < cap_area { 0.0 } else { h };
                loop {
                    let x = rng.random_range(-r..r);
                    let y = rng.random_range(-r..r);
                    if inside(x, y) {
                        break Point3::new(x, y, z);
                    }
                }
            } else {
                let k = rng.random_range(0..6) as f64;
                let a = std::f64::consts::PI / 3.0 * k;
                let normal = Vec3::new(a.cos(), a.sin(), 0.0);
                let tangent = Vec3::new(-a.sin(), a.cos(), 0.0);
                let s = rng.random_range(-r / 2.0..r / 2.0);
                Point3::from(normal * apothem + tangent * s + Vec3::z() * rng.random_range(0.0..h))
            };
            pose.apply(&p)
        })
        .collect()
}

/// Spherical cap of a sphere with radius `sphere_r`, cap half-angle
/// `half_angle`, vertex at the origin, opening towards +z; moved by `pose`.
pub(crate) fn spherical_cap(rng: &mut impl Rng, sphere_r: f64, half_angle: f64, pose: &RigidTransform, n: usize) -> Vec<Point3> {
    let cos_max = half_angle.cos();
    (0..n)
        .map(|_| {
            // Uniform on the cap: cosθ uniform in [cos_max, 1].
            let c: f64 = rng.random_range(cos_max..=1.0);
            let s = (1.0 - c * c).max(0.0).sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let p = Point3::new(sphere_r * s * phi.cos(), sphere_r * s * phi.sin(), sphere_r * (1.0 - c));
            pose.apply(&p)
        })
        .collect()
}

/// Rotation taking +z onto `dir`.
pub(crate) fn align_z(dir: &Vec3) -> RigidTransform {
    let d = dir.normalize();
    let z = Vec3::z();
    let axis = z.cross(&d);
    if axis.norm() < 1e-12 {
        if d.z > 0.0 {
            RigidTransform::identity()
        } else {
            RigidTransform::from_axis_angle(&Vec3::x(), std::f64::consts::PI)
        }
    } else {
        RigidTransform::from_axis_angle(&axis, z.dot(&d).clamp(-1.0, 1.0).acos())
    }
}
