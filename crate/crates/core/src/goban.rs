//! Go rules engine: stone placement, capture, liberty counting and
//! simple-ko tracking on boards of side length 2 through 25.
//!
//! Boards are immutable values: [`Board::play`] returns a new board and
//! leaves its input untouched, so replays naturally produce a sequence of
//! snapshots that can be paired with per-move annotations.

use serde::{Deserialize, Serialize};
use std::fmt;

pub const MIN_BOARD_SIZE: usize = 2;
pub const MAX_BOARD_SIZE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::Black => 'B',
            Color::White => 'W',
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Black => "Black",
            Color::White => "White",
        })
    }
}

/// Zero-based (row, column) intersection; row 0 is the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub row: u8,
    pub col: u8,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Coord {
        Coord {
            row: row as u8,
            col: col as u8,
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Play(Coord),
    Pass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub color: Color,
    pub kind: MoveKind,
}

impl Move {
    pub fn play(color: Color, row: usize, col: usize) -> Move {
        Move {
            color,
            kind: MoveKind::Play(Coord::new(row, col)),
        }
    }

    pub fn pass(color: Color) -> Move {
        Move {
            color,
            kind: MoveKind::Pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IllegalMove {
    #[error("point is occupied")]
    Occupied,
    #[error("move would be suicide")]
    Suicide,
    #[error("point is forbidden by the ko rule")]
    Ko,
    #[error("coordinate is outside the board")]
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BoardError {
    #[error("board size {0} outside supported range {MIN_BOARD_SIZE}..={MAX_BOARD_SIZE}")]
    BadSize(usize),
    #[error("coordinate is outside the board")]
    OutOfBounds,
    #[error("setup stone at occupied point")]
    SetupOccupied,
    #[error("setup leaves a group with no liberties")]
    SetupDeadGroup,
}

/// A maximal orthogonally-connected set of same-colored stones together
/// with its liberties (the empty points orthogonally adjacent to it).
/// Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub color: Color,
    pub stones: Vec<Coord>,
    pub liberties: Vec<Coord>,
}

/// A full Go position. Equality covers the grid, the player to move, the
/// ko point and the move number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    size: u8,
    grid: Vec<Option<Color>>,
    to_move: Color,
    ko_point: Option<Coord>,
    move_number: u32,
    captures_black: u32,
    captures_white: u32,
}

impl Board {
    pub fn new(size: usize) -> Result<Board, BoardError> {
        if !(MIN_BOARD_SIZE..=MAX_BOARD_SIZE).contains(&size) {
            return Err(BoardError::BadSize(size));
        }
        Ok(Board {
            size: size as u8,
            grid: vec![None; size * size],
            to_move: Color::Black,
            ko_point: None,
            move_number: 0,
            captures_black: 0,
            captures_white: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn to_move(&self) -> Color {
        self.to_move
    }

    pub fn ko_point(&self) -> Option<Coord> {
        self.ko_point
    }

    pub fn move_number(&self) -> u32 {
        self.move_number
    }

    /// Stones captured so far by the given player.
    pub fn captures_by(&self, color: Color) -> u32 {
        match color {
            Color::Black => self.captures_black,
            Color::White => self.captures_white,
        }
    }

    pub fn in_bounds(&self, coord: Coord) -> bool {
        (coord.row as usize) < self.size() && (coord.col as usize) < self.size()
    }

    fn index(&self, coord: Coord) -> usize {
        coord.row as usize * self.size() + coord.col as usize
    }

    pub fn stone_at(&self, coord: Coord) -> Option<Color> {
        self.grid[self.index(coord)]
    }

    pub fn stone_count(&self) -> usize {
        self.grid.iter().filter(|c| c.is_some()).count()
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        let n = self.size();
        (0..n).flat_map(move |r| (0..n).map(move |c| Coord::new(r, c)))
    }

    pub fn neighbors(&self, coord: Coord) -> impl Iterator<Item = Coord> + '_ {
        let n = self.size() as i16;
        let (r, c) = (coord.row as i16, coord.col as i16);
        [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
            .into_iter()
            .filter(move |&(rr, cc)| rr >= 0 && rr < n && cc >= 0 && cc < n)
            .map(|(rr, cc)| Coord::new(rr as usize, cc as usize))
    }

    /// Place a setup stone (handicap / AB / AW), bypassing turn order and
    /// capture logic. Fails if the point is occupied or the placement
    /// leaves any zero-liberty group on the board.
    pub fn with_setup_stone(&self, color: Color, coord: Coord) -> Result<Board, BoardError> {
        if !self.in_bounds(coord) {
            return Err(BoardError::OutOfBounds);
        }
        if self.stone_at(coord).is_some() {
            return Err(BoardError::SetupOccupied);
        }
        let mut next = self.clone();
        let idx = next.index(coord);
        next.grid[idx] = Some(color);
        let mut probes: Vec<Coord> = next.neighbors(coord).collect();
        probes.push(coord);
        for probe in probes {
            if next.stone_at(probe).is_some() && next.collect_group(probe).liberties.is_empty() {
                return Err(BoardError::SetupDeadGroup);
            }
        }
        Ok(next)
    }

    /// Force the player to move (used after handicap setup).
    pub fn with_to_move(&self, color: Color) -> Board {
        let mut next = self.clone();
        next.to_move = color;
        next
    }

    fn collect_group(&self, coord: Coord) -> Group {
        let color = self.stone_at(coord).expect("collect_group on empty point");
        let mut stones = Vec::new();
        let mut liberties = Vec::new();
        let mut seen = vec![false; self.grid.len()];
        let mut lib_seen = vec![false; self.grid.len()];
        let mut stack = vec![coord];
        seen[self.index(coord)] = true;
        while let Some(p) = stack.pop() {
            stones.push(p);
            for nb in self.neighbors(p).collect::<Vec<_>>() {
                let idx = self.index(nb);
                match self.stone_at(nb) {
                    None => {
                        if !lib_seen[idx] {
                            lib_seen[idx] = true;
                            liberties.push(nb);
                        }
                    }
                    Some(c) if c == color && !seen[idx] => {
                        seen[idx] = true;
                        stack.push(nb);
                    }
                    _ => {}
                }
            }
        }
        stones.sort();
        liberties.sort();
        Group {
            color,
            stones,
            liberties,
        }
    }

    /// The maximal connected group containing `coord`, or `None` if the
    /// point is empty.
    pub fn group_at(&self, coord: Coord) -> Result<Option<Group>, IllegalMove> {
        if !self.in_bounds(coord) {
            return Err(IllegalMove::OutOfBounds);
        }
        Ok(self.stone_at(coord).map(|_| self.collect_group(coord)))
    }

    /// Apply a move, returning the resulting position. The input board is
    /// unchanged on error.
    pub fn play(&self, mv: Move) -> Result<Board, IllegalMove> {
        match mv.kind {
            MoveKind::Pass => {
                let mut next = self.clone();
                next.to_move = mv.color.opposite();
                next.ko_point = None;
                next.move_number += 1;
                Ok(next)
            }
            MoveKind::Play(coord) => {
                if !self.in_bounds(coord) {
                    return Err(IllegalMove::OutOfBounds);
                }
                if self.stone_at(coord).is_some() {
                    return Err(IllegalMove::Occupied);
                }
                if self.ko_point == Some(coord) {
                    return Err(IllegalMove::Ko);
                }
                let (mut next, captured) = self.place_and_capture(mv.color, coord);
                let own = next.collect_group(coord);
                if own.liberties.is_empty() {
                    return Err(IllegalMove::Suicide);
                }
                // Simple ko: exactly one stone captured, by a lone stone
                // whose single liberty is the point just emptied.
                next.ko_point = if captured.len() == 1
                    && own.stones.len() == 1
                    && own.liberties == captured
                {
                    Some(captured[0])
                } else {
                    None
                };
                match mv.color {
                    Color::Black => next.captures_black += captured.len() as u32,
                    Color::White => next.captures_white += captured.len() as u32,
                }
                next.to_move = mv.color.opposite();
                next.move_number += 1;
                debug_assert!(next.all_groups_alive());
                Ok(next)
            }
        }
    }

    /// Put a `color` stone on an empty point and remove any opponent
    /// groups left without liberties. No legality checks: turn order, ko
    /// and suicide are ignored. Returns the board and the sorted list of
    /// captured points. Used for what-if evaluation by pattern detectors.
    pub(crate) fn place_and_capture(&self, color: Color, coord: Coord) -> (Board, Vec<Coord>) {
        let mut next = self.clone();
        let idx = next.index(coord);
        debug_assert!(next.grid[idx].is_none());
        next.grid[idx] = Some(color);
        let mut captured = Vec::new();
        for nb in next.neighbors(coord).collect::<Vec<_>>() {
            if next.stone_at(nb) == Some(color.opposite()) {
                let g = next.collect_group(nb);
                if g.liberties.is_empty() {
                    for s in &g.stones {
                        let i = next.index(*s);
                        next.grid[i] = None;
                    }
                    captured.extend(g.stones);
                }
            }
        }
        captured.sort();
        captured.dedup();
        (next, captured)
    }

    /// All legal moves for the player to move, including Pass.
    pub fn legal_moves(&self) -> Vec<Move> {
        let mut moves = Vec::new();
        for coord in self.coords() {
            if self.is_legal_play(self.to_move, coord) {
                moves.push(Move {
                    color: self.to_move,
                    kind: MoveKind::Play(coord),
                });
            }
        }
        moves.push(Move::pass(self.to_move));
        moves
    }

    /// Fast legality test for placing a `color` stone at `coord`.
    pub fn is_legal_play(&self, color: Color, coord: Coord) -> bool {
        if !self.in_bounds(coord) || self.stone_at(coord).is_some() || self.ko_point == Some(coord)
        {
            return false;
        }
        // Not suicide if: an empty neighbor exists, a friendly neighbor
        // group keeps a spare liberty, or an enemy neighbor group is
        // captured outright.
        let mut checked: Vec<Coord> = Vec::with_capacity(4);
        for nb in self.neighbors(coord) {
            match self.stone_at(nb) {
                None => return true,
                Some(c) => {
                    if checked.contains(&nb) {
                        continue;
                    }
                    let g = self.collect_group(nb);
                    checked.extend_from_slice(&g.stones);
                    if c == color {
                        if g.liberties.iter().any(|&l| l != coord) {
                            return true;
                        }
                    } else if g.liberties == [coord] {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn all_groups_alive(&self) -> bool {
        self.coords().all(|c| match self.stone_at(c) {
            None => true,
            Some(_) => !self.collect_group(c).liberties.is_empty(),
        })
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.size() {
            for c in 0..self.size() {
                let ch = match self.stone_at(Coord::new(r, c)) {
                    Some(Color::Black) => 'X',
                    Some(Color::White) => 'O',
                    None => '.',
                };
                write!(f, "{ch}")?;
                if c + 1 < self.size() {
                    write!(f, " ")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Build a board from an ASCII diagram: `X` black, `O` white, `.` empty.
/// Rows may contain spaces. Intended for tests and examples.
pub fn board_from_diagram(rows: &[&str]) -> Result<Board, BoardError> {
    let mut b = Board::new(rows.len())?;
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.chars().filter(|ch| !ch.is_whitespace()).enumerate() {
            let color = match ch {
                'X' => Some(Color::Black),
                'O' => Some(Color::White),
                _ => None,
            };
            if let Some(color) = color {
                b = b.with_setup_stone(color, Coord::new(r, c))?;
            }
        }
    }
    Ok(b)
}
