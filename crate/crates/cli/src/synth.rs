//! Synthetic scenes with closed-form depth.
//!
//! Pinhole camera with focal length `f = width` pixels and principal point at
//! the image centre. A pixel `(u, v)` looks along `r = ((u - cx) / f,
//! (v - cy) / f, 1)`; a plane `n . X = d` is hit at depth `Z = d / (n . r)`.

use rand::Rng;

use crate::ppm::RgbImage;
use crate::raster::DepthRaster;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn new(width: usize, height: usize) -> Self {
        Camera {
            width,
            height,
            focal: width as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn ray(&self, u: usize, v: usize) -> [f64; 3] {
        [
            (u as f64 - self.cx) / self.focal,
            (v as f64 - self.cy) / self.focal,
            1.0,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scene {
    /// Plane `Z = depth`.
    Fronto { depth: f64 },
    /// Plane `normal . X = distance`, unit normal facing the camera.
    Slanted { normal: [f64; 3], distance: f64 },
    /// A box whose front face, at `front`, covers the pixel rectangle
    /// `[u0, u1) x [v0, v1)` in front of a fronto-parallel wall at `back`.
    Box {
        back: f64,
        front: f64,
        rect: [usize; 4],
    },
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Scene {
    /// Draws scene `index`; the kind cycles fronto, slanted, box.
    pub fn random<R: Rng + ?Sized>(index: usize, cam: &Camera, rng: &mut R) -> Self {
        match index % 3 {
            0 => Scene::Fronto {
                depth: rng.gen_range(1.0..6.0),
            },
            1 => {
                // Tilts up to 35 degrees keep every ray in front of the plane.
                let (a, b) = (rng.gen_range(-0.6..0.6f64), rng.gen_range(-0.6..0.6f64));
                let n = [a.sin() * b.cos(), b.sin(), a.cos() * b.cos()];
                Scene::Slanted {
                    normal: n,
                    distance: rng.gen_range(1.5..4.0),
                }
            }
            _ => {
                let back = rng.gen_range(3.0..7.0);
                let front = rng.gen_range(1.0..back - 0.5);
                let u0 = rng.gen_range(0..cam.width / 2);
                let v0 = rng.gen_range(0..cam.height / 2);
                let u1 = rng.gen_range(u0 + 1..=cam.width);
                let v1 = rng.gen_range(v0 + 1..=cam.height);
                Scene::Box {
                    back,
                    front,
                    rect: [u0, v0, u1, v1],
                }
            }
        }
    }

    pub fn depth_at(&self, cam: &Camera, u: usize, v: usize) -> f64 {
        match *self {
            Scene::Fronto { depth } => depth,
            Scene::Slanted { normal, distance } => distance / dot(normal, cam.ray(u, v)),
            Scene::Box { back, front, rect } => {
                if (rect[0]..rect[2]).contains(&u) && (rect[1]..rect[3]).contains(&v) {
                    front
                } else {
                    back
                }
            }
        }
    }

    /// Depth raster and a checker-textured image darkening with distance.
    pub fn render(&self, cam: &Camera, tint: [f64; 3]) -> (RgbImage, DepthRaster) {
        let mut depth = Vec::with_capacity(cam.width * cam.height);
        let mut pixels = Vec::with_capacity(3 * cam.width * cam.height);
        for v in 0..cam.height {
            for u in 0..cam.width {
                let z = self.depth_at(cam, u, v);
                let r = cam.ray(u, v);
                let (x, y) = (z * r[0], z * r[1]);
                let checker =
                    ((x / 0.25).floor() as i64 + (y / 0.25).floor() as i64).rem_euclid(2) as f64;
                let shade = (0.6 + 0.4 * checker) / (1.0 + 0.15 * z);
                for t in tint {
                    pixels.push((255.0 * (t * shade).clamp(0.0, 1.0)).round() as u8);
                }
                depth.push(z as f32);
            }
        }
        (
            RgbImage::new(cam.width, cam.height, pixels).expect("sizes agree"),
            DepthRaster::new(cam.width, cam.height, depth).expect("depths are finite"),
        )
    }
}

/// `count` scenes drawn from `rng`, each with a random tint.
pub fn generate<R: Rng + ?Sized>(
    count: usize,
    width: usize,
    height: usize,
    rng: &mut R,
) -> impl Iterator<Item = (Scene, RgbImage, DepthRaster)> + '_ {
    let cam = Camera::new(width, height);
    (0..count).map(move |i| {
        let scene = Scene::random(i, &cam, rng);
        let tint = [
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.4..1.0),
        ];
        let (img, depth) = scene.render(&cam, tint);
        (scene, img, depth)
    })
}
