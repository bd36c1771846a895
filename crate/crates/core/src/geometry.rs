//! Plan-view geometry: points, axis-aligned rectangles and segment clipping.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

#[allow(clippy::should_implement_trait)]
impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        self.sub(other).norm()
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self.add(other.sub(self).scale(t))
    }
}

/// Axis-aligned rectangle given by its center and half-extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub center: Vec2,
    pub half: Vec2,
}

impl Aabb {
    pub fn new(center: Vec2, half: Vec2) -> Self {
        Self { center, half }
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half.norm()
    }

    /// Strict (open-set) containment.
    pub fn contains_open(&self, p: Vec2) -> bool {
        (p.x - self.center.x).abs() < self.half.x && (p.y - self.center.y).abs() < self.half.y
    }

    /// Clips the segment `a + t (b - a)`, `t ∈ [0, 1]`, against the closed
    /// rectangle (Liang–Barsky). Returns the parameter interval of the chord.
    pub fn clip_segment(&self, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
        let d = b.sub(a);
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (p, dp, lo, hi) in [
            (a.x, d.x, self.center.x - self.half.x, self.center.x + self.half.x),
            (a.y, d.y, self.center.y - self.half.y, self.center.y + self.half.y),
        ] {
            if dp == 0.0 {
                if p < lo || p > hi {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo - p) / dp, (hi - p) / dp);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Result of casting the gNB→UE ray against an obstacle footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    /// Midpoint of the chord cut by the rectangle.
    pub chord_midpoint: Vec2,
    /// Chord-midpoint to center distance over the half-diagonal, in [0, 1].
    pub d_oc_norm: f64,
}

/// Returns `Some` iff the open segment `a → b` passes through the interior
/// of `rect`. Grazing contact with an edge or corner does not occlude.
pub fn occlusion(a: Vec2, b: Vec2, rect: &Aabb) -> Option<Occlusion> {
    if a == b {
        return None;
    }
    let (t0, t1) = rect.clip_segment(a, b)?;
    if t1 <= t0 {
        return None;
    }
    let mid = a.lerp(b, 0.5 * (t0 + t1));
    // The chord is convex and inside the closed rectangle, so it touches the
    // interior iff its midpoint does.
    if !rect.contains_open(mid) {
        return None;
    }
    let diag = rect.half_diagonal();
    let d_oc_norm = (mid.distance(rect.center) / diag).clamp(0.0, 1.0);
    Some(Occlusion {
        chord_midpoint: mid,
        d_oc_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obstacle(cx: f64, cy: f64) -> Aabb {
        Aabb::new(Vec2::new(cx, cy), Vec2::new(0.3, 0.3))
    }

    #[test]
    fn chord_through_center() {
        let o = occlusion(Vec2::new(0.0, 2.0), Vec2::new(6.0, 2.0), &obstacle(3.0, 2.0)).unwrap();
        assert_eq!(o.d_oc_norm, 0.0);
    }

    #[test]
    fn obstacle_off_segment() {
        assert!(occlusion(Vec2::new(0.0, 0.0), Vec2::new(6.0, 0.0), &obstacle(3.0, 3.0)).is_none());
    }

    #[test]
    fn offset_chord() {
        let o = occlusion(Vec2::new(0.0, 2.0), Vec2::new(6.0, 2.0), &obstacle(3.0, 2.25)).unwrap();
        let expected = 0.25 / 0.18_f64.sqrt();
        assert!((o.d_oc_norm - expected).abs() < 1e-12);
        assert!((o.d_oc_norm - 0.589).abs() < 1e-3);
    }

    #[test]
    fn grazing_edge_and_corner_are_clear() {
        // Quarter-metre sides keep every edge exactly representable.
        let r = Aabb::new(Vec2::new(3.0, 2.0), Vec2::new(0.25, 0.25));
        // Runs along the top edge.
        assert!(occlusion(Vec2::new(0.0, 2.25), Vec2::new(6.0, 2.25), &r).is_none());
        // Runs along the right edge.
        assert!(occlusion(Vec2::new(3.25, 0.0), Vec2::new(3.25, 2.25), &r).is_none());
        // Touches only the corner (3.25, 2.25).
        assert!(occlusion(Vec2::new(2.25, 3.25), Vec2::new(4.25, 1.25), &r).is_none());
    }

    #[test]
    fn coincident_endpoints_are_clear() {
        let p = Vec2::new(3.0, 2.0);
        assert!(occlusion(p, p, &obstacle(3.0, 2.0)).is_none());
    }

    #[test]
    fn segment_ending_inside_occludes() {
        assert!(occlusion(Vec2::new(0.0, 2.0), Vec2::new(3.0, 2.0), &obstacle(3.0, 2.0)).is_some());
    }
}
