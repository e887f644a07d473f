//! Rule-based detectors for four board phenomena: cut points, eyes,
//! ladder moves and walls. Each detector is pure and reports results for
//! one color; [`extract_pattern_features`] aggregates both colors into
//! per-position binary flags.

use crate::goban::{Board, Color, Coord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Group labels for a board: `label[idx]` is the group id of the stone at
/// that cell (empty cells get `usize::MAX`), with per-group liberty sets.
struct GroupMap {
    label: Vec<usize>,
    liberties: Vec<BTreeSet<Coord>>,
    colors: Vec<Color>,
}

const NO_GROUP: usize = usize::MAX;

fn group_map(board: &Board) -> GroupMap {
    let n = board.size();
    let mut label = vec![NO_GROUP; n * n];
    let mut liberties = Vec::new();
    let mut colors = Vec::new();
    for coord in board.coords() {
        let idx = coord.row as usize * n + coord.col as usize;
        let color = match board.stone_at(coord) {
            Some(c) => c,
            None => continue,
        };
        if label[idx] != NO_GROUP {
            continue;
        }
        let id = liberties.len();
        let mut libs = BTreeSet::new();
        let mut stack = vec![coord];
        label[idx] = id;
        while let Some(p) = stack.pop() {
            for nb in board.neighbors(p) {
                let nidx = nb.row as usize * n + nb.col as usize;
                match board.stone_at(nb) {
                    None => {
                        libs.insert(nb);
                    }
                    Some(c) if c == color && label[nidx] == NO_GROUP => {
                        label[nidx] = id;
                        stack.push(nb);
                    }
                    _ => {}
                }
            }
        }
        liberties.push(libs);
        colors.push(color);
    }
    GroupMap {
        label,
        liberties,
        colors,
    }
}

/// Liberty count of the group containing the stone placed at `coord`,
/// after removing any opponent groups the placement captures. Turn order,
/// ko and suicide legality are deliberately ignored: a zero result means
/// the hypothetical stone would be dead on arrival.
fn liberties_after_placement(board: &Board, color: Color, coord: Coord) -> usize {
    let (after, _captured) = board.place_and_capture(color, coord);
    after
        .group_at(coord)
        .expect("in bounds")
        .expect("stone just placed")
        .liberties
        .len()
}

/// Empty points where an opponent stone would join two or more currently
/// distinct opponent groups, and where a `color` stone would survive with
/// at least two liberties after captures resolve. Non-diagonal cuts are
/// permitted: any merging point qualifies.
pub fn detect_cut_points(board: &Board, color: Color) -> BTreeSet<Coord> {
    let opponent = color.opposite();
    let groups = group_map(board);
    let n = board.size();
    let mut out = BTreeSet::new();
    for coord in board.coords() {
        if board.stone_at(coord).is_some() {
            continue;
        }
        let mut adjacent_opponent_groups = BTreeSet::new();
        for nb in board.neighbors(coord) {
            if board.stone_at(nb) == Some(opponent) {
                adjacent_opponent_groups.insert(groups.label[nb.row as usize * n + nb.col as usize]);
            }
        }
        if adjacent_opponent_groups.len() < 2 {
            continue;
        }
        if liberties_after_placement(board, color, coord) >= 2 {
            out.insert(coord);
        }
    }
    out
}

/// An orthogonally connected region of empty points, sorted by
/// coordinate. The first cell identifies the region.
pub type EyeRegion = Vec<Coord>;

/// Empty regions whose every adjacent stone is `color`. Board edges never
/// disqualify a region, but a region bordering no stones at all (an empty
/// board) is not an eye.
pub fn detect_eyes(board: &Board, color: Color) -> Vec<EyeRegion> {
    let n = board.size();
    let mut seen = vec![false; n * n];
    let mut eyes = Vec::new();
    for start in board.coords() {
        let sidx = start.row as usize * n + start.col as usize;
        if seen[sidx] || board.stone_at(start).is_some() {
            continue;
        }
        let mut region = Vec::new();
        let mut stack = vec![start];
        seen[sidx] = true;
        let mut borders_own = false;
        let mut borders_enemy = false;
        while let Some(p) = stack.pop() {
            region.push(p);
            for nb in board.neighbors(p) {
                let nidx = nb.row as usize * n + nb.col as usize;
                match board.stone_at(nb) {
                    None => {
                        if !seen[nidx] {
                            seen[nidx] = true;
                            stack.push(nb);
                        }
                    }
                    Some(c) if c == color => borders_own = true,
                    Some(_) => borders_enemy = true,
                }
            }
        }
        if borders_own && !borders_enemy {
            region.sort();
            eyes.push(region);
        }
    }
    eyes.sort();
    eyes
}

/// Squares that extend a group out of atari into exactly two liberties:
/// `s` is the single liberty of some `color` group and a `color` stone at
/// `s` leaves the merged group with exactly two liberties (captures
/// resolved first). First-line squares are excluded as trivial.
pub fn detect_ladder_moves(board: &Board, color: Color) -> BTreeSet<Coord> {
    let groups = group_map(board);
    let last = board.size() - 1;
    let mut out = BTreeSet::new();
    for (id, libs) in groups.liberties.iter().enumerate() {
        if groups.colors[id] != color || libs.len() != 1 {
            continue;
        }
        let s = *libs.iter().next().expect("one liberty");
        if s.row as usize == 0 || s.row as usize == last || s.col as usize == 0
            || s.col as usize == last
        {
            continue;
        }
        if liberties_after_placement(board, color, s) == 2 {
            out.insert(s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WallOrientation {
    Horizontal,
    Vertical,
}

/// A maximal straight run of four or more same-colored stones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wall {
    pub orientation: WallOrientation,
    pub start: Coord,
    pub length: usize,
}

impl Wall {
    pub fn cells(&self) -> Vec<Coord> {
        (0..self.length)
            .map(|i| match self.orientation {
                WallOrientation::Horizontal => {
                    Coord::new(self.start.row as usize, self.start.col as usize + i)
                }
                WallOrientation::Vertical => {
                    Coord::new(self.start.row as usize + i, self.start.col as usize)
                }
            })
            .collect()
    }
}

/// Maximal horizontal and vertical runs of at least four consecutive
/// `color` stones, each reported once with its extent.
pub fn detect_walls(board: &Board, color: Color) -> Vec<Wall> {
    let n = board.size();
    let mut walls = Vec::new();
    let mut scan = |orientation: WallOrientation| {
        for line in 0..n {
            let mut run_start = None;
            for pos in 0..=n {
                let coord = match orientation {
                    WallOrientation::Horizontal => Coord::new(line, pos.min(n - 1)),
                    WallOrientation::Vertical => Coord::new(pos.min(n - 1), line),
                };
                let stone_here = pos < n && board.stone_at(coord) == Some(color);
                match (stone_here, run_start) {
                    (true, None) => run_start = Some(pos),
                    (false, Some(start)) => {
                        let length = pos - start;
                        if length >= 4 {
                            walls.push(Wall {
                                orientation,
                                start: match orientation {
                                    WallOrientation::Horizontal => Coord::new(line, start),
                                    WallOrientation::Vertical => Coord::new(start, line),
                                },
                                length,
                            });
                        }
                        run_start = None;
                    }
                    _ => {}
                }
            }
        }
    };
    scan(WallOrientation::Horizontal);
    scan(WallOrientation::Vertical);
    walls.sort();
    walls
}

/// Presence flags for one color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternFlags {
    pub cut: bool,
    pub eye: bool,
    pub ladder: bool,
    pub wall: bool,
}

/// Per-position pattern features: one flag set per color plus their OR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFeatures {
    pub cut: bool,
    pub eye: bool,
    pub ladder: bool,
    pub wall: bool,
    pub black: PatternFlags,
    pub white: PatternFlags,
}

impl PatternFeatures {
    pub fn for_color(&self, color: Color) -> PatternFlags {
        match color {
            Color::Black => self.black,
            Color::White => self.white,
        }
    }

    /// Aggregate flags in feature order: cut, eye, ladder, wall.
    pub fn bits(&self) -> [u8; 4] {
        [
            u8::from(self.cut),
            u8::from(self.eye),
            u8::from(self.ladder),
            u8::from(self.wall),
        ]
    }
}

pub const PATTERN_FEATURE_NAMES: [&str; 4] = ["cut", "eye", "ladder", "wall"];

/// Run all four detectors for both colors. A feature is present when its
/// detector output is non-empty for that color; the aggregate flag is the
/// OR of the two colors.
pub fn extract_pattern_features(board: &Board) -> PatternFeatures {
    let flags_for = |color: Color| PatternFlags {
        cut: !detect_cut_points(board, color).is_empty(),
        eye: !detect_eyes(board, color).is_empty(),
        ladder: !detect_ladder_moves(board, color).is_empty(),
        wall: !detect_walls(board, color).is_empty(),
    };
    let black = flags_for(Color::Black);
    let white = flags_for(Color::White);
    PatternFeatures {
        cut: black.cut || white.cut,
        eye: black.eye || white.eye,
        ladder: black.ladder || white.ladder,
        wall: black.wall || white.wall,
        black,
        white,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goban::board_from_diagram;

    fn board(rows: &[&str]) -> Board {
        board_from_diagram(rows).unwrap()
    }

    #[test]
    fn empty_board_has_no_patterns() {
        let b = Board::new(19).unwrap();
        assert!(detect_cut_points(&b, Color::Black).is_empty());
        assert!(detect_eyes(&b, Color::Black).is_empty());
        assert!(detect_ladder_moves(&b, Color::Black).is_empty());
        assert!(detect_walls(&b, Color::Black).is_empty());
        let f = extract_pattern_features(&b);
        assert_eq!(f.bits(), [0, 0, 0, 0]);
    }

    #[test]
    fn canonical_cut_point() {
        // Two separated white stones touch (2,2); black support at (1,2)
        // gives the black cutting stone three liberties.
        let b = board(&[
            ". . . . . . .",
            ". . X . . . .",
            ". O . O . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let cuts = detect_cut_points(&b, Color::Black);
        assert!(cuts.contains(&Coord::new(2, 2)));
        // The same point is not a cut for white: no two black groups to
        // join there.
        assert!(!detect_cut_points(&b, Color::White).contains(&Coord::new(2, 2)));
    }

    #[test]
    fn cut_needs_two_liberties() {
        // (1,1) joins three white groups, but a lone black stone there
        // keeps just the one liberty below: excluded.
        let b = board(&[
            ". O . . . . .",
            "O . O . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let cuts = detect_cut_points(&b, Color::Black);
        assert!(!cuts.contains(&Coord::new(1, 1)));
        // With support below, the same point becomes a valid cut.
        let b = b.with_setup_stone(Color::Black, Coord::new(2, 1)).unwrap();
        assert!(detect_cut_points(&b, Color::Black).contains(&Coord::new(1, 1)));
    }

    #[test]
    fn cut_requires_distinct_groups() {
        // The two white stones adjacent to (0,1) already connect through
        // (1,0)-(1,1)-(1,2)? They are one group via the bottom row, so no
        // cut exists.
        let b = board(&[
            "O . O . .",
            "O O O . .",
            ". . . . .",
            ". . X . .",
            ". . . . .",
        ]);
        assert!(!detect_cut_points(&b, Color::Black).contains(&Coord::new(0, 1)));
    }

    #[test]
    fn single_point_eye() {
        let b = board(&[
            ". . . . .",
            ". . X . .",
            ". X . X .",
            ". . X . .",
            ". . . . .",
        ]);
        let eyes = detect_eyes(&b, Color::Black);
        // The center point is an eye. The outer region also qualifies
        // under the literal rule: it borders black stones only (board
        // edges are neutral). With white stones anywhere outside, only
        // the center would remain.
        assert!(eyes.contains(&vec![Coord::new(2, 2)]));
        assert_eq!(eyes.len(), 2);
        assert!(detect_eyes(&b, Color::White).is_empty());

        let with_white = b.with_setup_stone(Color::White, Coord::new(4, 4)).unwrap();
        assert_eq!(
            detect_eyes(&with_white, Color::Black),
            vec![vec![Coord::new(2, 2)]]
        );
    }

    #[test]
    fn corner_eye_with_edge_boundary() {
        let b = board(&[
            ". X . . .",
            "X . . . .",
            ". . . O .",
            ". . . . .",
            ". . . . .",
        ]);
        let eyes = detect_eyes(&b, Color::Black);
        assert_eq!(eyes, vec![vec![Coord::new(0, 0)]]);
    }

    #[test]
    fn mixed_border_region_is_no_eye() {
        let b = board(&[
            ". X O . .",
            "X . . O .",
            ". X O . .",
            ". . . . .",
            ". . . . .",
        ]);
        // The central region touches both colors.
        let black_eyes = detect_eyes(&b, Color::Black);
        let white_eyes = detect_eyes(&b, Color::White);
        assert!(black_eyes.iter().all(|r| !r.contains(&Coord::new(1, 1))));
        assert!(white_eyes.iter().all(|r| !r.contains(&Coord::new(1, 1))));
    }

    #[test]
    fn multi_cell_eye_region() {
        // A two-cell region fully bordered by black.
        let b = board(&[
            ". X X X .",
            "X . . X .",
            ". X X X .",
            ". . . . .",
            ". . . . .",
        ]);
        let eyes = detect_eyes(&b, Color::Black);
        assert!(eyes.contains(&vec![Coord::new(1, 1), Coord::new(1, 2)]));
    }

    #[test]
    fn ladder_extension_detected() {
        // The classic ladder step: black in atari at (2,2) with the
        // attacker's diagonal stone at (3,1); extending to (3,2) leaves
        // exactly two liberties.
        let b = board(&[
            ". . . . . . .",
            ". . O . . . .",
            ". O X O . . .",
            ". O . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let g = b.group_at(Coord::new(2, 2)).unwrap().unwrap();
        assert_eq!(g.liberties, vec![Coord::new(3, 2)]);
        let ladders = detect_ladder_moves(&b, Color::Black);
        assert_eq!(ladders, BTreeSet::from([Coord::new(3, 2)]));
        assert!(detect_ladder_moves(&b, Color::White).is_empty());
    }

    #[test]
    fn filling_to_three_liberties_is_not_a_ladder() {
        // Without the diagonal stone the escape reaches open space with
        // three liberties.
        let b = board(&[
            ". . . . . . .",
            ". . O . . . .",
            ". O X O . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let ladders = detect_ladder_moves(&b, Color::Black);
        assert!(ladders.is_empty());
    }

    #[test]
    fn first_line_liberty_is_excluded() {
        // Black in atari whose only liberty lies on the first line.
        let b = board(&[
            ". . . . . . .",
            "O . . . . . .",
            "X O . . . . .",
            "X O . . . . .",
            ". O . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let g = b.group_at(Coord::new(2, 0)).unwrap().unwrap();
        assert_eq!(g.liberties, vec![Coord::new(4, 0)]);
        assert!(detect_ladder_moves(&b, Color::Black).is_empty());
    }

    #[test]
    fn wall_of_four_but_not_three() {
        let four = board(&[
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . X X X X",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let walls = detect_walls(&four, Color::Black);
        assert_eq!(
            walls,
            vec![Wall {
                orientation: WallOrientation::Horizontal,
                start: Coord::new(4, 3),
                length: 4
            }]
        );
        assert!(detect_walls(&four, Color::White).is_empty());

        let three = board(&[
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . X X X .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        assert!(detect_walls(&three, Color::Black).is_empty());
    }

    #[test]
    fn l_shape_is_not_a_wall() {
        // 3+3 stones sharing a corner: max straight run is 3.
        let b = board(&[
            "X . . . . . .",
            "X . . . . . .",
            "X X X . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        assert!(detect_walls(&b, Color::Black).is_empty());
    }

    #[test]
    fn crossing_runs_report_two_walls() {
        let b = board(&[
            ". . X . . . .",
            ". . X . . . .",
            "X X X X X . .",
            ". . X . . . .",
            ". . X . . . .",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let walls = detect_walls(&b, Color::Black);
        assert_eq!(walls.len(), 2);
        assert_eq!(walls[0].orientation, WallOrientation::Horizontal);
        assert_eq!(walls[0].length, 5);
        assert_eq!(walls[1].orientation, WallOrientation::Vertical);
        assert_eq!(walls[1].length, 5);
    }

    #[test]
    fn vertical_wall_start_and_extent() {
        let b = board(&[
            ". . . . . . .",
            ". O . . . . .",
            ". O . . . . .",
            ". O . . . . .",
            ". O . . . . .",
            ". O . . . . .",
            ". . . . . . .",
        ]);
        let walls = detect_walls(&b, Color::White);
        assert_eq!(
            walls,
            vec![Wall {
                orientation: WallOrientation::Vertical,
                start: Coord::new(1, 1),
                length: 5
            }]
        );
    }

    #[test]
    fn feature_flags_aggregate_per_color() {
        // The lone white stone keeps the open region from reading as a
        // black eye.
        let b = board(&[
            "O . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . . . . .",
            ". . . X X X X",
            ". . . . . . .",
            ". . . . . . .",
        ]);
        let f = extract_pattern_features(&b);
        assert!(f.wall && f.black.wall && !f.white.wall);
        assert!(!f.cut && !f.eye && !f.ladder);
        assert_eq!(f.bits(), [0, 0, 0, 1]);
    }
}
