//! Board-to-plane encoders: the 7-plane liberty/ko format and the
//! 17-plane history format. Plane stacks are the probing pipeline's
//! "layer 0".

use crate::goban::{Board, Color, Move, MoveKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneFormat {
    Planes7,
    Planes17,
}

impl PlaneFormat {
    pub fn plane_count(self) -> usize {
        match self {
            PlaneFormat::Planes7 => 7,
            PlaneFormat::Planes17 => 17,
        }
    }

    pub fn parse(s: &str) -> Option<PlaneFormat> {
        match s {
            "planes7" => Some(PlaneFormat::Planes7),
            "planes17" => Some(PlaneFormat::Planes17),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneFormat::Planes7 => "planes7",
            PlaneFormat::Planes17 => "planes17",
        }
    }
}

/// Binary input planes for one position, stored plane-major row-major.
/// `perspective` is the player to move: "own" planes come first in both
/// formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneStack {
    pub format: PlaneFormat,
    pub size: usize,
    pub perspective: Color,
    planes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("history board {index} does not replay into its successor")]
    HistoryOrder { index: usize },
    #[error("history longer than 7 boards ({0})")]
    HistoryTooLong(usize),
    #[error("history board {index} has mismatched size")]
    HistorySize { index: usize },
}

impl PlaneStack {
    fn zeroed(format: PlaneFormat, size: usize, perspective: Color) -> PlaneStack {
        PlaneStack {
            format,
            size,
            perspective,
            planes: vec![0; format.plane_count() * size * size],
        }
    }

    pub fn plane_count(&self) -> usize {
        self.format.plane_count()
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> u8 {
        self.planes[(plane * self.size + row) * self.size + col]
    }

    fn set(&mut self, plane: usize, row: usize, col: usize) {
        self.planes[(plane * self.size + row) * self.size + col] = 1;
    }

    /// One plane as a flat row-major slice.
    pub fn plane(&self, plane: usize) -> &[u8] {
        let cells = self.size * self.size;
        &self.planes[plane * cells..(plane + 1) * cells]
    }

    /// All planes as f32 values in plane-major row-major order, the
    /// layout used for activation layer 0.
    pub fn to_f32(&self) -> Vec<f32> {
        self.planes.iter().map(|&b| f32::from(b)).collect()
    }

    pub fn ones(&self) -> usize {
        self.planes.iter().filter(|&&b| b == 1).count()
    }
}

fn liberty_bin(liberties: usize) -> usize {
    match liberties {
        0 => unreachable!("legal boards have no zero-liberty groups"),
        1 => 0,
        2 => 1,
        _ => 2,
    }
}

/// Seven planes: 0-2 own stones with 1, 2, >=3 group liberties, 3-5 the
/// opponent's stones binned the same way, 6 the ko point. "Own" is the
/// player to move.
pub fn encode_planes7(board: &Board) -> PlaneStack {
    let own = board.to_move();
    let mut stack = PlaneStack::zeroed(PlaneFormat::Planes7, board.size(), own);
    let mut seen = vec![false; board.size() * board.size()];
    for coord in board.coords() {
        let idx = coord.row as usize * board.size() + coord.col as usize;
        if seen[idx] {
            continue;
        }
        let Some(color) = board.stone_at(coord) else {
            continue;
        };
        let group = board
            .group_at(coord)
            .expect("in bounds")
            .expect("stone present");
        let bin = liberty_bin(group.liberties.len());
        let base = if color == own { 0 } else { 3 };
        for stone in &group.stones {
            seen[stone.row as usize * board.size() + stone.col as usize] = true;
            stack.set(base + bin, stone.row as usize, stone.col as usize);
        }
    }
    if let Some(ko) = board.ko_point() {
        stack.set(6, ko.row as usize, ko.col as usize);
    }
    stack
}

/// Derive the move that turns `before` into `after`, if one exists.
/// Works for either color, so records that break strict alternation
/// still validate.
fn connecting_move(before: &Board, after: &Board) -> Option<Move> {
    let mut added = None;
    for coord in before.coords() {
        match (before.stone_at(coord), after.stone_at(coord)) {
            (None, Some(c)) => {
                if added.is_some() {
                    return None;
                }
                added = Some((c, coord));
            }
            _ => {}
        }
    }
    let candidates = match added {
        Some((color, coord)) => vec![Move {
            color,
            kind: MoveKind::Play(coord),
        }],
        None => vec![
            Move::pass(before.to_move()),
            Move::pass(before.to_move().opposite()),
        ],
    };
    candidates
        .into_iter()
        .find(|&mv| matches!(before.play(mv), Ok(b) if b == *after))
}

/// Seventeen planes: for each step t = 0..7 back in time, plane 2t holds
/// the stones of the player to move at `current` and plane 2t+1 the
/// opponent's, read from the board t moves earlier; missing history
/// leaves zero planes. Plane 16 is all ones when Black is to move.
///
/// `history` lists the boards preceding `current`, most recent last, and
/// must replay into `current` move by move.
pub fn encode_planes17(history: &[Board], current: &Board) -> Result<PlaneStack, EncodeError> {
    if history.len() > 7 {
        return Err(EncodeError::HistoryTooLong(history.len()));
    }
    for (index, board) in history.iter().enumerate() {
        if board.size() != current.size() {
            return Err(EncodeError::HistorySize { index });
        }
        let next = history.get(index + 1).unwrap_or(current);
        if connecting_move(board, next).is_none() {
            return Err(EncodeError::HistoryOrder { index });
        }
    }

    let own = current.to_move();
    let mut stack = PlaneStack::zeroed(PlaneFormat::Planes17, current.size(), own);
    for t in 0..8 {
        let board_t = if t == 0 {
            Some(current)
        } else {
            history.len().checked_sub(t).map(|i| &history[i])
        };
        let Some(board_t) = board_t else { continue };
        for coord in board_t.coords() {
            match board_t.stone_at(coord) {
                Some(c) if c == own => {
                    stack.set(2 * t, coord.row as usize, coord.col as usize)
                }
                Some(_) => stack.set(2 * t + 1, coord.row as usize, coord.col as usize),
                None => {}
            }
        }
    }
    if own == Color::Black {
        for r in 0..current.size() {
            for c in 0..current.size() {
                stack.set(16, r, c);
            }
        }
    }
    Ok(stack)
}

/// Encode every annotated mainline position of the records (the rows of
/// the feature matrix), keyed by (game id, move index).
pub fn encode_corpus(
    records: &[crate::sgf::GameRecord],
    format: PlaneFormat,
) -> Result<Vec<(u32, u32, PlaneStack)>, EncodeError> {
    let mut out = Vec::new();
    for record in records {
        let setup = record.setup_board();
        for (i, pos) in record.mainline.iter().enumerate() {
            if pos.comment.is_none() {
                continue;
            }
            let stack = match format {
                PlaneFormat::Planes7 => encode_planes7(&pos.board_after),
                PlaneFormat::Planes17 => {
                    // Boards preceding this one: setup, then each earlier
                    // move's result; keep at most the last seven.
                    let mut history: Vec<Board> = Vec::with_capacity(8);
                    history.push(setup.clone());
                    for prior in &record.mainline[..i] {
                        history.push(prior.board_after.clone());
                    }
                    let keep = history.len().saturating_sub(7);
                    encode_planes17(&history[keep..], &pos.board_after)?
                }
            };
            out.push((record.id, pos.move_index, stack));
        }
    }
    Ok(out)
}
