use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::report::normalize_label;
use crate::volume::WindowPreset;

/// Maps organ label families to display window presets.
///
/// A family key matches a label when the key's words appear as a contiguous
/// run of whole words in the label, so `"lung"` matches
/// `"left lung lower lobe"` but not `"lungs"`. The longest matching key wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowTable {
    pub presets: Vec<WindowPreset>,
    pub families: BTreeMap<String, String>,
    pub default: String,
}

impl Default for WindowTable {
    fn default() -> Self {
        let mut families = BTreeMap::new();
        for f in ["lung", "trachea", "bronchie"] {
            families.insert(f.to_string(), "lung".to_string());
        }
        for f in [
            "bone", "vertebrae", "rib", "sternum", "clavicle", "scapula", "humerus", "femur",
        ] {
            families.insert(f.to_string(), "bone".to_string());
        }
        Self {
            presets: vec![
                WindowPreset::lung(),
                WindowPreset::bone(),
                WindowPreset::soft_tissue(),
            ],
            families,
            default: "soft_tissue".to_string(),
        }
    }
}

impl WindowTable {
    pub fn preset(&self, name: &str) -> Option<&WindowPreset> {
        self.presets.iter().find(|p| p.name == name)
    }

    /// Every referenced preset exists, presets are valid and uniquely named.
    pub fn validate(&self) -> Result<(), String> {
        for (i, p) in self.presets.iter().enumerate() {
            if !p.is_valid() {
                return Err(format!("preset {:?} has an invalid window", p.name));
            }
            if self.presets[..i].iter().any(|q| q.name == p.name) {
                return Err(format!("preset {:?} is defined twice", p.name));
            }
        }
        if self.preset(&self.default).is_none() {
            return Err(format!("default preset {:?} is not defined", self.default));
        }
        for (family, name) in &self.families {
            if self.preset(name).is_none() {
                return Err(format!("family {family:?} refers to unknown preset {name:?}"));
            }
        }
        Ok(())
    }
}

fn words_contain(label: &[&str], key: &[&str]) -> bool {
    !key.is_empty() && label.windows(key.len()).any(|w| w == key)
}

/// Preset for `organ`, falling back to the table default (and then to the
/// soft-tissue preset if the table is inconsistent).
pub fn select_window(organ: &str, table: &WindowTable) -> WindowPreset {
    let label = normalize_label(organ);
    let words: Vec<&str> = label.split(' ').collect();
    let mut best: Option<(&str, &str)> = None;
    for (family, preset) in &table.families {
        let key = normalize_label(family);
        let kw: Vec<&str> = key.split(' ').collect();
        if !words_contain(&words, &kw) {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, _)) => {
                let bw = b.split(' ').count();
                kw.len() > bw || (kw.len() == bw && family.len() > b.len())
            }
        };
        if better {
            best = Some((family.as_str(), preset.as_str()));
        }
    }
    let name = best.map_or(table.default.as_str(), |(_, p)| p);
    table
        .preset(name)
        .or_else(|| table.preset(&table.default))
        .cloned()
        .unwrap_or_else(WindowPreset::soft_tissue)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let t = WindowTable::default();
        assert!(t.validate().is_ok());
        assert_eq!(select_window("left lung lower lobe", &t).name, "lung");
        assert_eq!(select_window("unlisted structure", &t).name, "soft_tissue");
        assert_eq!(select_window("thoracic vertebrae 7 (t7)", &t).name, "bone");
        assert_eq!(select_window("trachea and bronchie", &t).name, "lung");
        assert_eq!(select_window("spinal cord", &t).name, "soft_tissue");
        assert_eq!(select_window("Right  RIB", &t).name, "bone");
    }

    #[test]
    fn whole_words_only() {
        let t = WindowTable::default();
        assert_eq!(select_window("lungs", &t).name, "soft_tissue");
        assert_eq!(select_window("ribbon", &t).name, "soft_tissue");
    }

    #[test]
    fn longest_family_wins() {
        let mut t = WindowTable::default();
        t.families
            .insert("rib cartilage".into(), "soft_tissue".into());
        assert_eq!(select_window("rib cartilage", &t).name, "soft_tissue");
        assert_eq!(select_window("left rib", &t).name, "bone");
    }

    #[test]
    fn dangling_reference_is_invalid() {
        let mut t = WindowTable::default();
        t.families.insert("heart".into(), "cardiac".into());
        assert!(t.validate().is_err());
        t.families.remove("heart");
        t.default = "nope".into();
        assert!(t.validate().is_err());
    }
}
