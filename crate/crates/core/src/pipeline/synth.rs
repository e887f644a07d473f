//! Self-contained synthetic SGF corpus: random legal games with planted
//! comments whose keyword occurrences correlate with detector output on
//! the board, plus a ground-truth manifest of the emission model.

use crate::goban::{Board, MoveKind};
use crate::patterns::extract_pattern_features;
use crate::rng::Rng;
use crate::sgf::{point_to_sgf, serialize_sgf, GameTree, SgfNode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Filler vocabulary with planted per-comment emission probabilities,
/// well separated so document-frequency rankings are stable.
pub const FILLER_POOL: [(&str, f64); 16] = [
    ("the", 0.92),
    ("is", 0.84),
    ("to", 0.76),
    ("this", 0.68),
    ("white", 0.60),
    ("black", 0.52),
    ("and", 0.46),
    ("you", 0.40),
    ("move", 0.34),
    ("good", 0.28),
    ("shape", 0.23),
    ("territory", 0.18),
    ("point", 0.14),
    ("sente", 0.10),
    ("opponents", 0.06),
    ("exchange", 0.03),
];

/// Board phenomena that drive planted keyword emissions.
const PATTERN_WORDS: [&str; 6] = ["cut", "eye", "ladder", "wall", "ko", "atari"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthOptions {
    pub games: usize,
    pub moves_per_game: usize,
    pub board_size: usize,
    /// Probability that a move gets a comment.
    pub comment_probability: f64,
    /// P(keyword emitted | phenomenon present on the board).
    pub hit_rate: f64,
    /// P(keyword emitted | phenomenon absent).
    pub false_rate: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            games: 50,
            moves_per_game: 60,
            board_size: 19,
            comment_probability: 0.35,
            hit_rate: 0.9,
            false_rate: 0.05,
        }
    }
}

/// Ground truth recorded by the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub options: SynthOptions,
    pub filler_pool: Vec<(String, f64)>,
    pub pattern_words: Vec<String>,
    pub games: usize,
    pub total_moves: usize,
    pub comments: usize,
    /// Commented positions on which each phenomenon was present.
    pub pattern_presence: BTreeMap<String, usize>,
    /// Comments containing each planted word (document frequency).
    pub word_document_frequency: BTreeMap<String, usize>,
}

fn any_group_in_atari(board: &Board) -> bool {
    let mut seen = vec![false; board.size() * board.size()];
    for coord in board.coords() {
        let idx = coord.row as usize * board.size() + coord.col as usize;
        if seen[idx] || board.stone_at(coord).is_none() {
            continue;
        }
        let group = board
            .group_at(coord)
            .expect("in bounds")
            .expect("stone present");
        for s in &group.stones {
            seen[s.row as usize * board.size() + s.col as usize] = true;
        }
        if group.liberties.len() == 1 {
            return true;
        }
    }
    false
}

fn phenomena(board: &Board) -> [(&'static str, bool); 6] {
    let flags = extract_pattern_features(board);
    [
        ("cut", flags.cut),
        ("eye", flags.eye),
        ("ladder", flags.ladder),
        ("wall", flags.wall),
        ("ko", board.ko_point().is_some()),
        ("atari", any_group_in_atari(board)),
    ]
}

fn generate_game(rng: &mut Rng, opts: &SynthOptions, manifest: &mut SynthManifest) -> String {
    let mut board = Board::new(opts.board_size).expect("valid size");
    let mut nodes = vec![SgfNode {
        properties: vec![
            ("GM".into(), vec!["1".into()]),
            ("FF".into(), vec!["4".into()]),
            ("SZ".into(), vec![opts.board_size.to_string()]),
            ("CA".into(), vec!["UTF-8".into()]),
            ("PB".into(), vec!["synth-black".into()]),
            ("PW".into(), vec!["synth-white".into()]),
            ("RE".into(), vec!["B+R".into()]),
        ],
    }];
    for _ in 0..opts.moves_per_game {
        let color = board.to_move();
        let plays: Vec<_> = board
            .legal_moves()
            .into_iter()
            .filter(|m| matches!(m.kind, MoveKind::Play(_)))
            .collect();
        if plays.is_empty() {
            break;
        }
        let mv = plays[rng.below(plays.len() as u64) as usize];
        board = board.play(mv).expect("legal move");
        manifest.total_moves += 1;
        let coord_text = match mv.kind {
            MoveKind::Play(c) => point_to_sgf(c),
            MoveKind::Pass => String::new(),
        };
        let mut props = vec![(color.letter().to_string(), vec![coord_text])];

        let comment = if rng.chance(opts.comment_probability) {
            let mut words: Vec<&str> = Vec::new();
            for (word, present) in phenomena(&board) {
                if present {
                    *manifest
                        .pattern_presence
                        .entry(word.to_owned())
                        .or_insert(0) += 1;
                }
                let p = if present {
                    opts.hit_rate
                } else {
                    opts.false_rate
                };
                if rng.chance(p) {
                    words.push(word);
                }
            }
            for (word, p) in FILLER_POOL {
                if rng.chance(p) {
                    words.push(word);
                }
            }
            manifest.comments += 1;
            for word in &words {
                *manifest
                    .word_document_frequency
                    .entry((*word).to_owned())
                    .or_insert(0) += 1;
            }
            Some(if words.is_empty() {
                "quiet position".to_owned()
            } else {
                words.join(" ")
            })
        } else {
            None
        };
        if let Some(text) = comment {
            props.push(("C".into(), vec![text]));
        }
        nodes.push(SgfNode { properties: props });
    }
    let tree = GameTree {
        nodes,
        children: Vec::new(),
    };
    serialize_sgf(&tree)
}

/// Generate `options.games` legal random games under `out_dir`
/// (`game0000.sgf`, ...) and write `ground_truth.json`. Byte-identical
/// output for identical (seed, options).
pub fn generate_synthetic_corpus(
    seed: u64,
    options: &SynthOptions,
    out_dir: &Path,
) -> Result<SynthManifest, std::io::Error> {
    assert!(options.games >= 1, "need at least one game");
    std::fs::create_dir_all(out_dir)?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut manifest = SynthManifest {
        seed,
        options: options.clone(),
        filler_pool: FILLER_POOL
            .iter()
            .map(|&(w, p)| (w.to_owned(), p))
            .collect(),
        pattern_words: PATTERN_WORDS.iter().map(|&w| w.to_owned()).collect(),
        games: options.games,
        total_moves: 0,
        comments: 0,
        pattern_presence: BTreeMap::new(),
        word_document_frequency: BTreeMap::new(),
    };
    for game in 0..options.games {
        let sgf = generate_game(&mut rng, options, &mut manifest);
        std::fs::write(out_dir.join(format!("game{game:04}.sgf")), sgf.as_bytes())?;
    }
    std::fs::write(
        out_dir.join("ground_truth.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgf::{ingest_corpus, IngestOptions};

    fn small() -> SynthOptions {
        SynthOptions {
            games: 5,
            moves_per_game: 30,
            board_size: 19,
            comment_probability: 0.5,
            ..SynthOptions::default()
        }
    }

    #[test]
    fn corpus_is_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(9, &small(), a.path()).unwrap();
        generate_synthetic_corpus(9, &small(), b.path()).unwrap();
        for entry in std::fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let left = std::fs::read(a.path().join(&name)).unwrap();
            let right = std::fs::read(b.path().join(&name)).unwrap();
            assert_eq!(left, right, "{name:?}");
        }
        let c = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(10, &small(), c.path()).unwrap();
        let left = std::fs::read(a.path().join("game0000.sgf")).unwrap();
        let right = std::fs::read(c.path().join("game0000.sgf")).unwrap();
        assert_ne!(left, right);
    }

    #[test]
    fn games_replay_legally_and_counts_match() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_synthetic_corpus(4, &small(), dir.path()).unwrap();
        let (records, summary) = ingest_corpus(dir.path(), &IngestOptions::default()).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(summary.rejected.len(), 0);
        assert_eq!(summary.comments, manifest.comments);
        let moves: usize = records.iter().map(|r| r.mainline.len()).sum();
        assert_eq!(moves, manifest.total_moves);
    }

    #[test]
    fn certain_emission_marks_every_present_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            games: 4,
            moves_per_game: 50,
            comment_probability: 1.0,
            hit_rate: 1.0,
            false_rate: 0.0,
            ..SynthOptions::default()
        };
        generate_synthetic_corpus(11, &opts, dir.path()).unwrap();
        let (records, _) = ingest_corpus(dir.path(), &IngestOptions::default()).unwrap();
        let mut checked = 0;
        for record in &records {
            for pos in &record.mainline {
                let comment = pos.comment.as_deref().expect("every move commented");
                let tokens: std::collections::BTreeSet<String> =
                    crate::text::tokenize(comment).into_iter().collect();
                for (word, present) in phenomena(&pos.board_after) {
                    assert_eq!(
                        tokens.contains(word),
                        present,
                        "word {word} at game {} move {}",
                        record.id,
                        pos.move_index
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn planted_frequency_order_is_recovered() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            games: 30,
            moves_per_game: 40,
            comment_probability: 0.8,
            ..SynthOptions::default()
        };
        let manifest = generate_synthetic_corpus(7, &opts, dir.path()).unwrap();
        // Realized document frequencies of the filler pool follow the
        // planted order for this corpus.
        let freqs: Vec<usize> = FILLER_POOL
            .iter()
            .map(|(w, _)| {
                manifest
                    .word_document_frequency
                    .get(*w)
                    .copied()
                    .unwrap_or(0)
            })
            .collect();
        for pair in freqs.windows(2) {
            assert!(pair[0] > pair[1], "realized frequencies out of order: {freqs:?}");
        }

        let (records, _) = ingest_corpus(dir.path(), &IngestOptions::default()).unwrap();
        let comments: Vec<String> = records
            .iter()
            .flat_map(|r| r.mainline.iter().filter_map(|p| p.comment.clone()))
            .collect();
        let vocab: Vec<String> = FILLER_POOL.iter().map(|(w, _)| (*w).to_owned()).collect();
        let ranking = crate::text::rank_keywords(&comments, &vocab, 10).unwrap();
        let expected: Vec<String> = vocab[..10].to_vec();
        assert_eq!(ranking.top, expected);
        assert_eq!(ranking.histogram.len(), 10);
        assert_eq!(
            ranking.histogram[0],
            ("the".to_owned(), *manifest.word_document_frequency.get("the").unwrap())
        );
    }
}
