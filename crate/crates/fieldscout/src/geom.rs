//! Axis-aligned world-frame rectangles.
//!
//! The world frame has x pointing east and y pointing north. Rectangles are
//! half-open: a point on the max edge is outside, so abutting footprints
//! never claim the same grid cell twice.

/// Axis-aligned rectangle in world meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Rect {
        debug_assert!(max_x >= min_x && max_y >= min_y);
        Rect { min_x, min_y, max_x, max_y }
    }

    /// Rectangle of the given size centered on (cx, cy).
    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Rect {
        Rect::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)
    }

    /// Half-open containment: min edges inclusive, max edges exclusive.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x < self.max_x && y >= self.min_y && y < self.max_y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x < other.max_x
            && other.min_x < self.max_x
            && self.min_y < other.max_y
            && other.min_y < self.max_y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_round_trips_center_and_size() {
        let r = Rect::centered(4.5, -1.0, 3.0, 2.0);
        assert_eq!(r.center(), (4.5, -1.0));
        assert_eq!(r.width(), 3.0);
        assert_eq!(r.height(), 2.0);
        assert_eq!(r.area(), 6.0);
    }

    #[test]
    fn containment_is_half_open() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert!(r.contains(0.0, 0.0));
        assert!(!r.contains(1.0, 0.5));
        assert!(!r.contains(0.5, 1.0));
    }
}
