//! Deterministic synthetic assets: trash fields, survey missions and fence
//! crossing frame sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fence::GrayFrame;
use crate::geom::Vec2;
use crate::nav::Waypoint;
use crate::sim::TrashItem;

/// `n` items uniformly inside the axis-aligned box `[min, max]`.
pub fn trash_field(n: usize, seed: u64, min: Vec2, max: Vec2, mass: (f64, f64)) -> Vec<TrashItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| TrashItem {
            id: i as u32,
            position: Vec2::new(rng.gen_range(min.x..=max.x), rng.gen_range(min.y..=max.y)),
            mass: rng.gen_range(mass.0..=mass.1),
            collected: false,
        })
        .collect()
}

/// Boustrophedon survey of the box `[min, max]` with lanes parallel to x.
pub fn lawnmower(min: Vec2, max: Vec2, lane_spacing: f64, accept_radius: f64) -> Vec<Waypoint> {
    let lanes = ((max.y - min.y) / lane_spacing).floor() as usize + 1;
    let mut out = Vec::with_capacity(lanes * 2);
    for lane in 0..lanes {
        let y = min.y + lane as f64 * lane_spacing;
        let (a, b) = if lane % 2 == 0 { (min.x, max.x) } else { (max.x, min.x) };
        for x in [a, b] {
            out.push(Waypoint {
                x,
                y,
                accept_radius,
            });
        }
    }
    out
}

/// Distance from `p` to the segment `a -> b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Distance from `p` to the polyline `start -> waypoints[0] -> ...`.
pub fn distance_to_path(p: Vec2, start: Vec2, waypoints: &[Waypoint]) -> f64 {
    let mut prev = start;
    let mut best = p.distance(start);
    for wp in waypoints {
        best = best.min(point_segment_distance(p, prev, wp.position()));
        prev = wp.position();
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FenceSequenceSpec {
    pub width: usize,
    pub height: usize,
    pub background: u8,
    pub foreground: u8,
    pub blob_size: usize,
    /// Row of the horizontal fence the blobs cross.
    pub fence_y: f64,
    pub crossings: usize,
    pub frames_per_crossing: usize,
    pub frame_interval_ms: u64,
}

impl Default for FenceSequenceSpec {
    fn default() -> Self {
        Self {
            width: 80,
            height: 60,
            background: 20,
            foreground: 200,
            blob_size: 6,
            fence_y: 30.0,
            crossings: 1,
            frames_per_crossing: 39,
            frame_interval_ms: 100,
        }
    }
}

/// A rectangular body moving in a straight line, drawn on frames
/// `first..=last` with its top-left corner rounded to whole pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobPath {
    pub from: Vec2,
    pub to: Vec2,
    pub first: u64,
    pub last: u64,
    pub size: usize,
}

impl BlobPath {
    pub fn top_left(&self, frame: u64) -> Option<(usize, usize)> {
        if frame < self.first || frame > self.last {
            return None;
        }
        let span = (self.last - self.first).max(1) as f64;
        let s = (frame - self.first) as f64 / span;
        let p = self.from + (self.to - self.from) * s;
        Some((p.x.round() as usize, p.y.round() as usize))
    }

    /// Exact centroid of the drawn rectangle.
    pub fn centroid(&self, frame: u64) -> Option<Vec2> {
        let half = (self.size as f64 - 1.0) / 2.0;
        self.top_left(frame)
            .map(|(x, y)| Vec2::new(x as f64 + half, y as f64 + half))
    }
}

pub fn render(
    width: usize,
    height: usize,
    background: u8,
    foreground: u8,
    paths: &[BlobPath],
    frames: u64,
    frame_interval_ms: u64,
) -> Vec<GrayFrame> {
    (0..frames)
        .map(|index| {
            let mut f = GrayFrame::filled(width, height, background);
            f.index = index;
            f.t_ms = index * frame_interval_ms;
            for path in paths {
                if let Some((x0, y0)) = path.top_left(index) {
                    for y in y0..(y0 + path.size).min(height) {
                        for x in x0..(x0 + path.size).min(width) {
                            f.set(x, y, foreground);
                        }
                    }
                }
            }
            f
        })
        .collect()
}

/// Blob trajectories for `spec`: each crossing is a separate body moving
/// top to bottom across the fence row, one after another.
pub fn fence_paths(spec: &FenceSequenceSpec) -> Vec<BlobPath> {
    let lanes = spec.width.saturating_sub(2 * spec.blob_size + 8).max(1);
    (0..spec.crossings)
        .map(|i| {
            let x = (4 + (i * 17) % lanes) as f64;
            let first = 1 + (i * spec.frames_per_crossing) as u64;
            BlobPath {
                from: Vec2::new(x, 4.0),
                to: Vec2::new(x, (spec.height - spec.blob_size - 6) as f64),
                first,
                last: first + spec.frames_per_crossing as u64 - 1,
                size: spec.blob_size,
            }
        })
        .collect()
}

/// Frame 0 is the empty background; crossing bodies follow.
pub fn fence_sequence(spec: &FenceSequenceSpec) -> Vec<GrayFrame> {
    let frames = 1 + (spec.crossings * spec.frames_per_crossing) as u64;
    render(
        spec.width,
        spec.height,
        spec.background,
        spec.foreground,
        &fence_paths(spec),
        frames,
        spec.frame_interval_ms,
    )
}

/// Horizontal fence across the full frame width at `spec.fence_y`.
pub fn fence_vertices(spec: &FenceSequenceSpec) -> Vec<Vec2> {
    vec![
        Vec2::new(0.0, spec.fence_y),
        Vec2::new((spec.width - 1) as f64, spec.fence_y),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trash() {
        assert!(trash_field(0, 1, Vec2::ZERO, Vec2::new(1.0, 1.0), (0.1, 0.2)).is_empty());
    }

    #[test]
    fn fixed_seed_is_repeatable() {
        let a = trash_field(10, 7, Vec2::ZERO, Vec2::new(50.0, 20.0), (0.1, 0.5));
        let b = trash_field(10, 7, Vec2::ZERO, Vec2::new(50.0, 20.0), (0.1, 0.5));
        assert_eq!(a, b);
        let c = trash_field(10, 8, Vec2::ZERO, Vec2::new(50.0, 20.0), (0.1, 0.5));
        assert_ne!(a, c);
    }

    #[test]
    fn lawnmower_alternates() {
        let wps = lawnmower(Vec2::ZERO, Vec2::new(40.0, 8.0), 4.0, 3.0);
        let xy: Vec<_> = wps.iter().map(|w| (w.x, w.y)).collect();
        assert_eq!(
            xy,
            vec![(0.0, 0.0), (40.0, 0.0), (40.0, 4.0), (0.0, 4.0), (0.0, 8.0), (40.0, 8.0)]
        );
    }

    #[test]
    fn segment_distance() {
        let a = Vec2::ZERO;
        let b = Vec2::new(10.0, 0.0);
        assert_eq!(point_segment_distance(Vec2::new(5.0, 3.0), a, b), 3.0);
        assert_eq!(point_segment_distance(Vec2::new(13.0, 4.0), a, b), 5.0);
    }

    #[test]
    fn single_crossing_sequence_shape() {
        let spec = FenceSequenceSpec::default();
        let frames = fence_sequence(&spec);
        assert_eq!(frames.len(), 40);
        assert!(frames[0].pixels.iter().all(|&p| p == spec.background));
        let path = fence_paths(&spec)[0];
        assert!(path.centroid(1).unwrap().y < spec.fence_y);
        assert!(path.centroid(39).unwrap().y > spec.fence_y);
    }
}
