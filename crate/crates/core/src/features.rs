//! Feature-matrix assembly: one row per annotated position, with pattern
//! flags from the board and keyword/control bits from the comment.

use crate::patterns::{extract_pattern_features, PATTERN_FEATURE_NAMES};
use crate::probe::FeatureMatrix;
use crate::sgf::GameRecord;
use crate::text::{extract_keyword_features, Vocabulary};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureClass {
    Pattern,
    Keyword,
    ControlFunction,
    ControlContent,
}

impl FeatureClass {
    pub fn prefix(self) -> &'static str {
        match self {
            FeatureClass::Pattern => "pattern:",
            FeatureClass::Keyword => "keyword:",
            FeatureClass::ControlFunction => "control-function:",
            FeatureClass::ControlContent => "control-content:",
        }
    }

    pub fn of(feature_name: &str) -> Option<FeatureClass> {
        [
            FeatureClass::Pattern,
            FeatureClass::Keyword,
            FeatureClass::ControlFunction,
            FeatureClass::ControlContent,
        ]
        .into_iter()
        .find(|c| feature_name.starts_with(c.prefix()))
    }

    pub fn is_control(self) -> bool {
        matches!(
            self,
            FeatureClass::ControlFunction | FeatureClass::ControlContent
        )
    }
}

/// Which feature classes to include, from the config's
/// `pattern,keyword,control` selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSelection {
    pub pattern: bool,
    pub keyword: bool,
    pub control: bool,
}

impl Default for ClassSelection {
    fn default() -> Self {
        ClassSelection {
            pattern: true,
            keyword: true,
            control: true,
        }
    }
}

impl ClassSelection {
    pub fn parse(spec: &str) -> Option<ClassSelection> {
        let mut sel = ClassSelection {
            pattern: false,
            keyword: false,
            control: false,
        };
        for part in spec.split(',') {
            match part.trim() {
                "pattern" => sel.pattern = true,
                "keyword" => sel.keyword = true,
                "control" => sel.control = true,
                "" => {}
                _ => return None,
            }
        }
        if sel.pattern || sel.keyword || sel.control {
            Some(sel)
        } else {
            None
        }
    }

    pub fn to_spec(self) -> String {
        let mut parts = Vec::new();
        if self.pattern {
            parts.push("pattern");
        }
        if self.keyword {
            parts.push("keyword");
        }
        if self.control {
            parts.push("control");
        }
        parts.join(",")
    }
}

/// Feature column names for a vocabulary and class selection, in pattern,
/// keyword, control-function, control-content order.
pub fn feature_names(vocab: &Vocabulary, classes: ClassSelection) -> Vec<String> {
    let mut names = Vec::new();
    if classes.pattern {
        for p in PATTERN_FEATURE_NAMES {
            names.push(format!("{}{p}", FeatureClass::Pattern.prefix()));
        }
    }
    if classes.keyword {
        for k in &vocab.keywords {
            names.push(format!("{}{k}", FeatureClass::Keyword.prefix()));
        }
    }
    if classes.control {
        for w in &vocab.control_function {
            names.push(format!("{}{w}", FeatureClass::ControlFunction.prefix()));
        }
        for w in &vocab.control_content {
            names.push(format!("{}{w}", FeatureClass::ControlContent.prefix()));
        }
    }
    names
}

/// Build the feature matrix over every annotated mainline position
/// (root-node comments are excluded).
pub fn build_feature_matrix(
    records: &[GameRecord],
    vocab: &Vocabulary,
    classes: ClassSelection,
) -> FeatureMatrix {
    let names = feature_names(vocab, classes);
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for record in records {
        for pos in &record.mainline {
            let Some(comment) = &pos.comment else {
                continue;
            };
            keys.push((record.id, pos.move_index));
            if classes.pattern {
                let flags = extract_pattern_features(&pos.board_after);
                values.extend(flags.bits());
            }
            if classes.keyword || classes.control {
                let kw = extract_keyword_features(comment, vocab);
                let n_kw = vocab.keywords.len();
                if classes.keyword {
                    values.extend_from_slice(&kw.bits[..n_kw]);
                }
                if classes.control {
                    values.extend_from_slice(&kw.bits[n_kw..]);
                }
            }
        }
    }
    FeatureMatrix {
        feature_names: names,
        keys,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgf::{extract_mainline, parse_sgf};

    fn sample_records() -> Vec<GameRecord> {
        let tree = parse_sgf(
            b"(;GM[1]SZ[19]C[root note];B[pd]C[nice ko threat];W[dd];B[dp]C[the wall looks good])",
        )
        .unwrap();
        let mut r = extract_mainline(&tree).unwrap();
        r.id = 3;
        vec![r]
    }

    #[test]
    fn rows_are_annotated_positions_only() {
        let vocab = Vocabulary::default_paper();
        let m = build_feature_matrix(&sample_records(), &vocab, ClassSelection::default());
        // Root comment and the uncommented move are excluded.
        assert_eq!(m.keys, vec![(3, 1), (3, 3)]);
        assert_eq!(m.feature_names.len(), 4 + 30 + 60);
        assert_eq!(m.values.len(), 2 * 94);
    }

    #[test]
    fn keyword_bits_align_with_names() {
        let vocab = Vocabulary::default_paper();
        let m = build_feature_matrix(&sample_records(), &vocab, ClassSelection::default());
        let ko = m
            .feature_names
            .iter()
            .position(|n| n == "keyword:ko")
            .unwrap();
        let wall = m
            .feature_names
            .iter()
            .position(|n| n == "keyword:wall")
            .unwrap();
        let the = m
            .feature_names
            .iter()
            .position(|n| n == "control-function:the")
            .unwrap();
        assert_eq!(m.column(ko), vec![1, 0]);
        assert_eq!(m.column(wall), vec![0, 1]);
        assert_eq!(m.column(the), vec![0, 1]);
    }

    #[test]
    fn class_selection_filters_columns() {
        let vocab = Vocabulary::default_paper();
        let sel = ClassSelection {
            pattern: true,
            keyword: false,
            control: false,
        };
        let m = build_feature_matrix(&sample_records(), &vocab, sel);
        assert_eq!(m.feature_names.len(), 4);
        assert!(m.feature_names.iter().all(|n| n.starts_with("pattern:")));

        assert_eq!(ClassSelection::parse("keyword,control").map(|s| s.to_spec()),
            Some("keyword,control".to_owned()));
        assert!(ClassSelection::parse("nonsense").is_none());
        assert!(ClassSelection::parse("").is_none());
    }

    #[test]
    fn class_of_feature_names() {
        assert_eq!(FeatureClass::of("pattern:cut"), Some(FeatureClass::Pattern));
        assert_eq!(FeatureClass::of("keyword:ko"), Some(FeatureClass::Keyword));
        assert_eq!(
            FeatureClass::of("control-function:the"),
            Some(FeatureClass::ControlFunction)
        );
        assert_eq!(
            FeatureClass::of("control-content:white"),
            Some(FeatureClass::ControlContent)
        );
        assert_eq!(FeatureClass::of("something"), None);
    }
}
