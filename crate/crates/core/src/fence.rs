//! Virtual-fence surveillance: background differencing, 8-connected blob
//! labeling, greedy centroid tracking and fence-crossing counting.

use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{side_of, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FenceError {
    #[error("frame is {got_w}x{got_h}, background is {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("pixel buffer holds {len} bytes, expected {width}x{height}")]
    BadBuffer {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("invalid fence: {0}")]
    BadFence(String),
}

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub index: u64,
    pub t_ms: u64,
}

impl GrayFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        index: u64,
        t_ms: u64,
    ) -> Result<Self, FenceError> {
        if pixels.len() != width * height {
            return Err(FenceError::BadBuffer {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
            t_ms,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            index: 0,
            t_ms: 0,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    fn check_same_size(&self, other: &GrayFrame) -> Result<(), FenceError> {
        if self.width != other.width || self.height != other.height {
            return Err(FenceError::DimensionMismatch {
                got_w: self.width,
                got_h: self.height,
                want_w: other.width,
                want_h: other.height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub centroid: Vec2,
    pub area: usize,
}

/// Foreground blobs of `frame` against `background`, largest first.
pub fn detect_blobs(
    frame: &GrayFrame,
    background: &GrayFrame,
    diff_threshold: u8,
    min_area: usize,
) -> Result<Vec<Blob>, FenceError> {
    frame.check_same_size(background)?;
    let (w, h) = (frame.width, frame.height);
    let mask: Vec<bool> = frame
        .pixels
        .iter()
        .zip(&background.pixels)
        .map(|(&a, &b)| a.abs_diff(b) >= diff_threshold)
        .collect();

    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut blobs = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut area, mut sx, mut sy) = (0usize, 0u64, 0u64);
        while let Some(idx) = queue.pop_front() {
            let (x, y) = (idx % w, idx / w);
            area += 1;
            sx += x as u64;
            sy += y as u64;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let n = ny * w + nx;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        if area >= min_area {
            blobs.push(Blob {
                centroid: Vec2::new(sx as f64 / area as f64, sy as f64 / area as f64),
                area,
            });
        }
    }
    blobs.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.x.total_cmp(&b.centroid.x))
    });
    Ok(blobs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Side for a nonzero orientation sign of a point against a directed segment.
    pub fn from_sign(sign: i8) -> Option<Side> {
        match sign {
            s if s > 0 => Some(Side::Left),
            s if s < 0 => Some(Side::Right),
            _ => None,
        }
    }
}

impl FromStr for Side {
    type Err = FenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            other => Err(FenceError::BadFence(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    IntoProtected,
    Any,
}

impl FromStr for DirectionMode {
    type Err = FenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "into" | "into_protected" | "into-protected" => Ok(DirectionMode::IntoProtected),
            "any" => Ok(DirectionMode::Any),
            other => Err(FenceError::BadFence(format!(
                "unknown direction mode `{other}`"
            ))),
        }
    }
}

/// Fence drawn in image coordinates. Sides are taken relative to the
/// traversal direction of each segment using the raw (x, y) orientation
/// sign, so with image rows growing downward `Left` is visually clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FencePolyline {
    vertices: Vec<Vec2>,
    pub protected_side: Side,
    pub direction_mode: DirectionMode,
}

impl FencePolyline {
    pub fn new(
        vertices: Vec<Vec2>,
        protected_side: Side,
        direction_mode: DirectionMode,
    ) -> Result<Self, FenceError> {
        if vertices.len() < 2 {
            return Err(FenceError::BadFence("need at least two vertices".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(FenceError::BadFence("non-finite vertex".into()));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(FenceError::BadFence(
                "consecutive vertices must be distinct".into(),
            ));
        }
        Ok(Self {
            vertices,
            protected_side,
            direction_mode,
        })
    }

    /// Parses `"x1,y1;x2,y2;..."`.
    pub fn parse_vertices(spec: &str) -> Result<Vec<Vec2>, FenceError> {
        spec.split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|pair| {
                let mut it = pair.split(',').map(|v| v.trim().parse::<f64>());
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(x)), Some(Ok(y)), None) => Ok(Vec2::new(x, y)),
                    _ => Err(FenceError::BadFence(format!("bad vertex `{pair}`"))),
                }
            })
            .collect()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub segment_index: usize,
    /// Side of the crossed segment the body moved into.
    pub entered: Side,
}

/// Tests the movement `prev -> next` against each fence segment in order.
///
/// A crossing needs the two centroids strictly on opposite sides of the
/// segment's line and the segment to meet the movement (touching at a fence
/// vertex counts). Travel along the fence line never counts, and neither
/// does a move that starts or ends exactly on it.
pub fn detect_crossing(prev: Vec2, next: Vec2, fence: &FencePolyline) -> Option<Crossing> {
    if prev == next {
        return None;
    }
    for (i, (a, b)) in fence.segments().enumerate() {
        let before = side_of(prev, a, b);
        let after = side_of(next, a, b);
        if before * after >= 0 {
            continue;
        }
        if side_of(a, prev, next) * side_of(b, prev, next) > 0 {
            continue;
        }
        let entered = Side::from_sign(after).expect("strict side");
        if fence.direction_mode == DirectionMode::IntoProtected && entered != fence.protected_side
        {
            return None;
        }
        return Some(Crossing {
            segment_index: i,
            entered,
        });
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    /// (centroid, frame index), strictly increasing in frame index.
    pub history: Vec<(Vec2, u64)>,
    pub missed: u32,
    pub last_crossing_frame: Option<u64>,
}

impl Track {
    pub fn last(&self) -> Vec2 {
        self.history.last().expect("track history is never empty").0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FenceParams {
    pub diff_threshold: u8,
    pub min_area: usize,
    pub max_match_dist: f64,
    pub max_missed: u32,
    pub cooldown: u64,
}

impl Default for FenceParams {
    fn default() -> Self {
        Self {
            diff_threshold: 30,
            min_area: 9,
            max_match_dist: 20.0,
            max_missed: 5,
            cooldown: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub t_ms: u64,
    pub camera_id: u8,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FenceState {
    pub background: GrayFrame,
    pub fence: FencePolyline,
    pub tracks: Vec<Track>,
    pub count: u64,
    pub params: FenceParams,
    pub camera_id: u8,
    next_track_id: u64,
}

/// Matches detections to tracks greedily by globally smallest distance.
/// Returns, for each detection, the id of the track it extended or spawned.
pub fn update_tracks(
    tracks: &mut Vec<Track>,
    next_id: &mut u64,
    detections: &[Blob],
    frame_index: u64,
    params: &FenceParams,
) -> Vec<u64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let dist = t.last().distance(d.centroid);
            if dist <= params.max_match_dist {
                pairs.push((dist, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; tracks.len()];
    let mut owner: Vec<Option<u64>> = vec![None; detections.len()];
    for (_, ti, di) in pairs {
        if track_used[ti] || owner[di].is_some() {
            continue;
        }
        track_used[ti] = true;
        let t = &mut tracks[ti];
        if t.history.last().is_none_or(|&(_, f)| frame_index > f) {
            t.history.push((detections[di].centroid, frame_index));
        }
        t.missed = 0;
        owner[di] = Some(t.id);
    }

    for (ti, t) in tracks.iter_mut().enumerate() {
        if !track_used[ti] {
            t.missed += 1;
        }
    }
    tracks.retain(|t| t.missed <= params.max_missed);

    for (di, d) in detections.iter().enumerate() {
        if owner[di].is_none() {
            let id = *next_id;
            *next_id += 1;
            tracks.push(Track {
                id,
                history: vec![(d.centroid, frame_index)],
                missed: 0,
                last_crossing_frame: None,
            });
            owner[di] = Some(id);
        }
    }
    owner.into_iter().map(|o| o.expect("assigned")).collect()
}

impl FenceState {
    pub fn new(
        background: GrayFrame,
        fence: FencePolyline,
        params: FenceParams,
        camera_id: u8,
    ) -> Self {
        Self {
            background,
            fence,
            tracks: Vec::new(),
            count: 0,
            params,
            camera_id,
            next_track_id: 0,
        }
    }

    pub fn update_tracks(&mut self, detections: &[Blob], frame_index: u64) -> Vec<u64> {
        update_tracks(
            &mut self.tracks,
            &mut self.next_track_id,
            detections,
            frame_index,
            &self.params,
        )
    }

    /// Detect, track, then test every track updated on this frame for a
    /// crossing between its last two centroids.
    pub fn process_frame(&mut self, frame: &GrayFrame) -> Result<Vec<Alert>, FenceError> {
        let blobs = detect_blobs(
            frame,
            &self.background,
            self.params.diff_threshold,
            self.params.min_area,
        )?;
        self.update_tracks(&blobs, frame.index);

        let mut alerts = Vec::new();
        for track in self.tracks.iter_mut() {
            let n = track.history.len();
            if n < 2 || track.missed != 0 || track.history[n - 1].1 != frame.index {
                continue;
            }
            let (prev, next) = (track.history[n - 2].0, track.history[n - 1].0);
            if detect_crossing(prev, next, &self.fence).is_none() {
                continue;
            }
            let cooling = track
                .last_crossing_frame
                .is_some_and(|f| frame.index.saturating_sub(f) < self.params.cooldown);
            if cooling {
                continue;
            }
            track.last_crossing_frame = Some(frame.index);
            self.count += 1;
            alerts.push(Alert {
                t_ms: frame.t_ms,
                camera_id: self.camera_id,
                count: self.count,
            });
        }
        Ok(alerts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horizontal(protected: Side, mode: DirectionMode) -> FencePolyline {
        FencePolyline::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)],
            protected,
            mode,
        )
        .unwrap()
    }

    #[test]
    fn identical_frames_have_no_blobs() {
        let f = GrayFrame::filled(16, 16, 40);
        assert!(detect_blobs(&f, &f, 10, 1).unwrap().is_empty());
    }

    #[test]
    fn square_centroid() {
        let bg = GrayFrame::filled(32, 32, 0);
        let mut f = bg.clone();
        for y in 10..=11 {
            for x in 10..=11 {
                f.set(x, y, 255);
            }
        }
        let b = detect_blobs(&f, &bg, 30, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].centroid, Vec2::new(10.5, 10.5));
        assert_eq!(b[0].area, 4);
    }

    #[test]
    fn diagonal_pixels_join_and_small_blobs_drop() {
        let bg = GrayFrame::filled(8, 8, 0);
        let mut f = bg.clone();
        f.set(1, 1, 200);
        f.set(2, 2, 200);
        f.set(6, 6, 200);
        let b = detect_blobs(&f, &bg, 30, 2).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].area, 2);
        assert_eq!(b[0].centroid, Vec2::new(1.5, 1.5));
    }

    #[test]
    fn dimension_mismatch() {
        let a = GrayFrame::filled(4, 4, 0);
        let b = GrayFrame::filled(4, 5, 0);
        assert!(matches!(
            detect_blobs(&a, &b, 1, 1),
            Err(FenceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn crossing_examples() {
        let fence = horizontal(Side::Right, DirectionMode::IntoProtected);
        let c = detect_crossing(Vec2::new(0.5, 1.0), Vec2::new(0.5, -1.0), &fence).unwrap();
        assert_eq!(c.segment_index, 0);
        assert_eq!(c.entered, Side::Right);
        assert_eq!(
            detect_crossing(Vec2::new(0.5, -1.0), Vec2::new(0.5, 1.0), &fence),
            None
        );
        assert_eq!(
            detect_crossing(Vec2::new(0.5, 1.0), Vec2::new(0.6, 2.0), &fence),
            None
        );
        assert_eq!(
            detect_crossing(Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.0), &fence),
            None
        );
        let any = horizontal(Side::Right, DirectionMode::Any);
        assert!(detect_crossing(Vec2::new(0.5, -1.0), Vec2::new(0.5, 1.0), &any).is_some());
    }

    #[test]
    fn touching_fence_end_counts_landing_on_line_does_not() {
        let any = horizontal(Side::Left, DirectionMode::Any);
        // passes exactly through the endpoint (1, 0)
        assert!(detect_crossing(Vec2::new(0.0, 1.0), Vec2::new(2.0, -1.0), &any).is_some());
        // ends on the fence line
        assert!(detect_crossing(Vec2::new(0.5, 1.0), Vec2::new(0.5, 0.0), &any).is_none());
        // misses the segment
        assert!(detect_crossing(Vec2::new(1.5, 1.0), Vec2::new(1.5, -1.0), &any).is_none());
    }

    #[test]
    fn first_segment_wins() {
        let fence = FencePolyline::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0)],
            Side::Left,
            DirectionMode::Any,
        )
        .unwrap();
        let c = detect_crossing(Vec2::new(1.0, -1.0), Vec2::new(3.0, 1.5), &fence).unwrap();
        assert_eq!(c.segment_index, 0);
    }

    #[test]
    fn fence_parsing() {
        let v = FencePolyline::parse_vertices("0,30; 79,30").unwrap();
        assert_eq!(v, vec![Vec2::new(0.0, 30.0), Vec2::new(79.0, 30.0)]);
        assert!(FencePolyline::parse_vertices("0,1,2").is_err());
        assert!(FencePolyline::new(vec![Vec2::ZERO], Side::Left, DirectionMode::Any).is_err());
        assert!(FencePolyline::new(vec![Vec2::ZERO, Vec2::ZERO], Side::Left, DirectionMode::Any).is_err());
        assert_eq!("RIGHT".parse::<Side>().unwrap(), Side::Right);
        assert_eq!("any".parse::<DirectionMode>().unwrap(), DirectionMode::Any);
    }

    fn blob(x: f64, y: f64) -> Blob {
        Blob {
            centroid: Vec2::new(x, y),
            area: 10,
        }
    }

    #[test]
    fn single_pair_match() {
        let p = FenceParams {
            max_match_dist: 10.0,
            ..FenceParams::default()
        };
        let mut tracks = Vec::new();
        let mut next = 0;
        update_tracks(&mut tracks, &mut next, &[blob(50.0, 50.0)], 0, &p);
        let ids = update_tracks(&mut tracks, &mut next, &[blob(52.0, 50.0)], 1, &p);
        assert_eq!(ids, vec![0]);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].history.len(), 2);
    }

    #[test]
    fn track_expires_after_max_missed() {
        let p = FenceParams::default();
        let mut tracks = Vec::new();
        let mut next = 0;
        update_tracks(&mut tracks, &mut next, &[blob(5.0, 5.0)], 0, &p);
        for f in 1..=p.max_missed as u64 {
            update_tracks(&mut tracks, &mut next, &[], f, &p);
            assert_eq!(tracks.len(), 1);
        }
        update_tracks(&mut tracks, &mut next, &[], p.max_missed as u64 + 1, &p);
        assert!(tracks.is_empty());
    }
}
