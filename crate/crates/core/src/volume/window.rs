use serde::{Deserialize, Serialize};

/// Linear window/level mapping from HU to display intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPreset {
    pub name: String,
    pub center: f64,
    pub width: f64,
}

impl WindowPreset {
    pub fn new(name: impl Into<String>, center: f64, width: f64) -> Self {
        Self {
            name: name.into(),
            center,
            width,
        }
    }

    pub fn lung() -> Self {
        Self::new("lung", -600.0, 1500.0)
    }

    pub fn bone() -> Self {
        Self::new("bone", 400.0, 1800.0)
    }

    pub fn soft_tissue() -> Self {
        Self::new("soft_tissue", 40.0, 400.0)
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0 && self.width.is_finite() && self.center.is_finite()
    }

    /// `(lower, upper)` HU bounds of the ramp.
    pub fn range(&self) -> (f64, f64) {
        (
            self.center - self.width / 2.0,
            self.center + self.width / 2.0,
        )
    }
}

/// `clamp((hu - center) / width + 0.5, 0, 1)`.
#[inline]
pub fn window_value(hu: f32, preset: &WindowPreset) -> f32 {
    (((hu as f64 - preset.center) / preset.width + 0.5).clamp(0.0, 1.0)) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_and_bounds() {
        let p = WindowPreset::new("w", 40.0, 400.0);
        assert_eq!(window_value(40.0, &p), 0.5);
        assert_eq!(window_value(-160.0, &p), 0.0);
        assert_eq!(window_value(-1000.0, &p), 0.0);
        assert_eq!(window_value(240.0, &p), 1.0);
        assert_eq!(window_value(3000.0, &p), 1.0);
    }

    #[test]
    fn lung_window_value() {
        let p = WindowPreset::new("lung", -600.0, 1500.0);
        assert!((window_value(-225.0, &p) - 0.75).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn monotone(center in -2000.0f64..2000.0, width in 0.1f64..5000.0,
                    a in -1024.0f32..3071.0, b in -1024.0f32..3071.0) {
            let p = WindowPreset::new("p", center, width);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (vlo, vhi) = (window_value(lo, &p), window_value(hi, &p));
            prop_assert!(vlo <= vhi);
            prop_assert!((0.0..=1.0).contains(&vlo) && (0.0..=1.0).contains(&vhi));
        }
    }
}
