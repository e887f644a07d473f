//! SGF (FF[3]/FF[4] subset) parsing and game-record extraction.
//!
//! [`parse_sgf`] produces a faithful [`GameTree`]; [`extract_mainline`]
//! replays the first-child line through the rules engine and attaches each
//! node's comment to the position reached after that node's move.
//! Unplayed variations are retained in the tree but dropped from the
//! record (counted, never silently).

use crate::goban::{Board, Color, Coord, Move, MoveKind};
use crate::text;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SGF parse error at byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("unsupported game type GM[{0}]")]
    UnsupportedGame(String),
    #[error("unsupported board size {0}")]
    BadSize(String),
    #[error("node has both B and W properties at move {0}")]
    MixedMoveNode(u32),
    #[error("bad coordinate '{value}' at move {move_index}")]
    BadCoordinate { move_index: u32, value: String },
    #[error("setup stone invalid: {0}")]
    BadSetup(String),
    #[error("setup stones after the first move")]
    MidGameSetup,
    #[error("illegal game at move {move_index}: {reason}")]
    IllegalGame { move_index: u32, reason: String },
}

/// One SGF node: ordered (identifier, values) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SgfNode {
    pub properties: Vec<(String, Vec<String>)>,
}

impl SgfNode {
    pub fn values(&self, ident: &str) -> Option<&[String]> {
        self.properties
            .iter()
            .find(|(id, _)| id == ident)
            .map(|(_, vs)| vs.as_slice())
    }

    pub fn single(&self, ident: &str) -> Option<&str> {
        self.values(ident).and_then(|vs| vs.first()).map(String::as_str)
    }
}

/// A game tree: a node sequence followed by ordered sub-trees. The first
/// child at every branch is the mainline.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GameTree {
    pub nodes: Vec<SgfNode>,
    pub children: Vec<GameTree>,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, reason: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn tree(&mut self) -> Result<RawTree, ParseError> {
        self.skip_whitespace();
        if self.peek() != Some(b'(') {
            return self.error("expected '('");
        }
        self.pos += 1;
        let mut nodes = Vec::new();
        self.skip_whitespace();
        while self.peek() == Some(b';') {
            self.pos += 1;
            nodes.push(self.node()?);
            self.skip_whitespace();
        }
        if nodes.is_empty() {
            return self.error("expected ';' to start a node");
        }
        let mut children = Vec::new();
        while self.peek() == Some(b'(') {
            children.push(self.tree()?);
            self.skip_whitespace();
        }
        if self.peek() != Some(b')') {
            return self.error("unbalanced parentheses: expected ')'");
        }
        self.pos += 1;
        Ok(RawTree { nodes, children })
    }

    fn node(&mut self) -> Result<RawNode, ParseError> {
        let mut properties = Vec::new();
        loop {
            self.skip_whitespace();
            match self.peek() {
                Some(c) if c.is_ascii_alphabetic() => {
                    let ident = self.ident()?;
                    let mut values = Vec::new();
                    self.skip_whitespace();
                    if self.peek() != Some(b'[') {
                        return self.error(format!("property {ident} missing '[' value"));
                    }
                    while self.peek() == Some(b'[') {
                        values.push(self.value()?);
                        self.skip_whitespace();
                    }
                    properties.push((ident, values));
                }
                _ => break,
            }
        }
        Ok(RawNode { properties })
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        // FF[3] long identifiers may contain lowercase letters, which are
        // ignored; the stored identifier is the uppercase subsequence.
        let mut ident = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_uppercase() {
                ident.push(c as char);
                self.pos += 1;
            } else if c.is_ascii_lowercase() {
                self.pos += 1;
            } else {
                break;
            }
        }
        if ident.is_empty() {
            return self.error("empty property identifier");
        }
        Ok(ident)
    }

    fn value(&mut self) -> Result<Vec<u8>, ParseError> {
        debug_assert_eq!(self.peek(), Some(b'['));
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                None => return self.error("unterminated property value: missing ']'"),
                Some(b']') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        None => return self.error("dangling escape at end of input"),
                        // An escaped line break is a soft break: removed.
                        Some(b'\n') => {
                            self.pos += 1;
                        }
                        Some(b'\r') => {
                            self.pos += 1;
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        Some(c) => {
                            out.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

struct RawNode {
    properties: Vec<(String, Vec<Vec<u8>>)>,
}

struct RawTree {
    nodes: Vec<RawNode>,
    children: Vec<RawTree>,
}

fn decode(bytes: &[u8], utf8: bool) -> String {
    if utf8 {
        String::from_utf8_lossy(bytes).into_owned()
    } else {
        // Latin-1: every byte maps to the code point of the same value.
        bytes.iter().map(|&b| b as char).collect()
    }
}

fn decode_tree(raw: RawTree, utf8: bool) -> GameTree {
    GameTree {
        nodes: raw
            .nodes
            .into_iter()
            .map(|n| SgfNode {
                properties: n
                    .properties
                    .into_iter()
                    .map(|(id, vs)| (id, vs.iter().map(|v| decode(v, utf8)).collect()))
                    .collect(),
            })
            .collect(),
        children: raw
            .children
            .into_iter()
            .map(|c| decode_tree(c, utf8))
            .collect(),
    }
}

/// Parse one SGF game tree. The character encoding is taken from the
/// root CA property (UTF-8 honored, anything else read as Latin-1, the
/// FF[3] default). Trailing non-whitespace content is an error.
pub fn parse_sgf(bytes: &[u8]) -> Result<GameTree, ParseError> {
    let mut parser = Parser { bytes, pos: 0 };
    // Skip a UTF-8 BOM if present.
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        parser.pos = 3;
    }
    let raw = parser.tree()?;
    parser.skip_whitespace();
    if parser.pos != bytes.len() {
        return parser.error("trailing content after game tree");
    }
    let charset = raw
        .nodes
        .first()
        .and_then(|n| {
            n.properties
                .iter()
                .find(|(id, _)| id == "CA")
                .and_then(|(_, vs)| vs.first())
        })
        .map(|v| String::from_utf8_lossy(v).trim().to_ascii_uppercase());
    let utf8 = matches!(charset.as_deref(), Some("UTF-8") | Some("UTF8"));
    Ok(decode_tree(raw, utf8))
}

fn escape_value(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        if ch == ']' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}

/// Serialize a tree back to SGF text. `parse_sgf(serialize_sgf(t))`
/// reconstructs `t` exactly for trees whose values are valid UTF-8.
pub fn serialize_sgf(tree: &GameTree) -> String {
    fn emit(tree: &GameTree, out: &mut String) {
        out.push('(');
        for node in &tree.nodes {
            out.push(';');
            for (ident, values) in &node.properties {
                out.push_str(ident);
                for value in values {
                    out.push('[');
                    out.push_str(&escape_value(value));
                    out.push(']');
                }
            }
        }
        for child in &tree.children {
            emit(child, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    emit(tree, &mut out);
    out
}

/// A mainline position: the move played, the comment attached to that
/// node (if any) and the board state after the move.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPosition {
    pub mv: Move,
    pub comment: Option<String>,
    pub board_after: Board,
    /// 1-based index into the mainline.
    pub move_index: u32,
}

/// A replayed game: setup stones, the annotated mainline and free-form
/// metadata. Root-node comments (before move 1) are kept separately and
/// excluded from probing by default.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameRecord {
    /// Corpus-assigned numeric id (stable across serialization).
    pub id: u32,
    /// Source file name, when ingested from disk.
    pub source: String,
    pub board_size: usize,
    pub handicap_setup: Vec<(Color, Coord)>,
    pub root_comment: Option<String>,
    pub mainline: Vec<AnnotatedPosition>,
    pub metadata: Vec<(String, String)>,
    /// Unplayed variations discarded while following the first child.
    pub variations_discarded: usize,
}

impl GameRecord {
    /// The board before move 1 (setup stones applied).
    pub fn setup_board(&self) -> Board {
        let mut board = Board::new(self.board_size).expect("validated size");
        for &(color, coord) in &self.handicap_setup {
            board = board
                .with_setup_stone(color, coord)
                .expect("validated setup");
        }
        board = board.with_to_move(initial_to_move(&self.handicap_setup));
        board
    }
}

fn initial_to_move(setup: &[(Color, Coord)]) -> Color {
    let blacks = setup.iter().filter(|(c, _)| *c == Color::Black).count();
    let whites = setup.iter().filter(|(c, _)| *c == Color::White).count();
    if blacks > whites {
        Color::White
    } else {
        Color::Black
    }
}

/// SGF coordinate: letters from 'a', column first then row ("cd" = column
/// 2, row 3). Empty or "tt" (boards up to 19) is a pass.
fn parse_point(value: &str, size: usize) -> Option<MoveKind> {
    let v = value.trim();
    if v.is_empty() || (v == "tt" && size <= 19) {
        return Some(MoveKind::Pass);
    }
    let mut chars = v.chars();
    let (col_ch, row_ch) = (chars.next()?, chars.next()?);
    if chars.next().is_some() {
        return None;
    }
    let col = letter_index(col_ch)?;
    let row = letter_index(row_ch)?;
    if row < size && col < size {
        Some(MoveKind::Play(Coord::new(row, col)))
    } else {
        None
    }
}

fn letter_index(ch: char) -> Option<usize> {
    if ch.is_ascii_lowercase() {
        Some(ch as usize - 'a' as usize)
    } else {
        None
    }
}

/// SGF text for a coordinate, column letter first.
pub fn point_to_sgf(coord: Coord) -> String {
    let col = (b'a' + coord.col) as char;
    let row = (b'a' + coord.row) as char;
    format!("{col}{row}")
}

const METADATA_PROPS: [&str; 6] = ["PB", "PW", "BR", "WR", "RE", "HA"];

/// Replay the first-child line of a parsed tree into a [`GameRecord`].
/// The game is rejected (never truncated) if any mainline move is
/// illegal.
pub fn extract_mainline(tree: &GameTree) -> Result<GameRecord, RecordError> {
    let root = tree.nodes.first();
    if let Some(gm) = root.and_then(|n| n.single("GM")) {
        if gm.trim() != "1" {
            return Err(RecordError::UnsupportedGame(gm.trim().to_owned()));
        }
    }
    let size: usize = match root.and_then(|n| n.single("SZ")) {
        None => 19,
        Some(raw) => raw
            .trim()
            .parse()
            .ok()
            .filter(|s| (crate::goban::MIN_BOARD_SIZE..=crate::goban::MAX_BOARD_SIZE).contains(s))
            .ok_or_else(|| RecordError::BadSize(raw.trim().to_owned()))?,
    };

    let mut record = GameRecord {
        board_size: size,
        ..GameRecord::default()
    };

    let mut board = Board::new(size).expect("validated size");
    let mut move_index: u32 = 0;
    let mut tree_ptr = tree;
    loop {
        for node in &tree_ptr.nodes {
            process_node(node, &mut record, &mut board, &mut move_index)?;
        }
        if tree_ptr.children.is_empty() {
            break;
        }
        record.variations_discarded += tree_ptr.children.len() - 1;
        tree_ptr = &tree_ptr.children[0];
    }
    Ok(record)
}

fn process_node(
    node: &SgfNode,
    record: &mut GameRecord,
    board: &mut Board,
    move_index: &mut u32,
) -> Result<(), RecordError> {
    // Setup stones are only valid before the first move.
    for (color, ident) in [(Color::Black, "AB"), (Color::White, "AW")] {
        if let Some(values) = node.values(ident) {
            if *move_index > 0 {
                return Err(RecordError::MidGameSetup);
            }
            for value in values {
                match parse_point(value, record.board_size) {
                    Some(MoveKind::Play(coord)) => {
                        *board = board
                            .with_setup_stone(color, coord)
                            .map_err(|e| RecordError::BadSetup(e.to_string()))?;
                        record.handicap_setup.push((color, coord));
                    }
                    _ => {
                        return Err(RecordError::BadCoordinate {
                            move_index: 0,
                            value: value.clone(),
                        })
                    }
                }
            }
            *board = board.with_to_move(initial_to_move(&record.handicap_setup));
        }
    }

    let black = node.single("B");
    let white = node.single("W");
    let comment = node.values("C").map(|vs| vs.join("\n"));
    match (black, white) {
        (Some(_), Some(_)) => return Err(RecordError::MixedMoveNode(*move_index + 1)),
        (None, None) => {
            // A comment on a move-less node describes the current
            // position: attach it there.
            if let Some(text) = comment {
                attach_comment(record, *move_index, text);
            }
        }
        (black, white) => {
            let (color, value) = match black {
                Some(v) => (Color::Black, v),
                None => (Color::White, white.expect("one side present")),
            };
            *move_index += 1;
            let kind =
                parse_point(value, record.board_size).ok_or_else(|| RecordError::BadCoordinate {
                    move_index: *move_index,
                    value: value.to_owned(),
                })?;
            let mv = Move { color, kind };
            *board = board.play(mv).map_err(|e| RecordError::IllegalGame {
                move_index: *move_index,
                reason: e.to_string(),
            })?;
            record.mainline.push(AnnotatedPosition {
                mv,
                comment,
                board_after: board.clone(),
                move_index: *move_index,
            });
        }
    }

    for (ident, values) in &node.properties {
        if METADATA_PROPS.contains(&ident.as_str()) {
            if let Some(value) = values.first() {
                record.metadata.push((ident.clone(), value.clone()));
            }
        }
    }
    Ok(())
}

fn attach_comment(record: &mut GameRecord, move_index: u32, text: String) {
    if move_index == 0 {
        match &mut record.root_comment {
            Some(existing) => {
                existing.push('\n');
                existing.push_str(&text);
            }
            None => record.root_comment = Some(text),
        }
    } else if let Some(pos) = record.mainline.last_mut() {
        match &mut pos.comment {
            Some(existing) => {
                existing.push('\n');
                existing.push_str(&text);
            }
            None => pos.comment = Some(text),
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus serialization: one JSON record per line.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MoveDto {
    Play(String, u8, u8),
    Pass(String, String),
}

#[derive(Serialize, Deserialize)]
struct RecordDto {
    id: u32,
    source: String,
    size: usize,
    setup: Vec<MoveDto>,
    moves: Vec<MoveDto>,
    comments: BTreeMap<String, String>,
    metadata: Vec<(String, String)>,
    variations_discarded: usize,
}

fn color_str(color: Color) -> String {
    color.letter().to_string()
}

fn parse_color(s: &str) -> Result<Color, CorpusError> {
    match s {
        "B" => Ok(Color::Black),
        "W" => Ok(Color::White),
        other => Err(CorpusError::BadRecord(format!("bad color '{other}'"))),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad corpus record: {0}")]
    BadRecord(String),
    #[error("corpus line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("corpus record {id}: replay failed: {reason}")]
    Replay { id: u32, reason: String },
}

/// Serialize one record as a single JSON line. Board states are not
/// stored; they are rebuilt by replay on load.
pub fn record_to_json(record: &GameRecord) -> String {
    let mut comments = BTreeMap::new();
    if let Some(root) = &record.root_comment {
        comments.insert("0".to_owned(), root.clone());
    }
    for pos in &record.mainline {
        if let Some(c) = &pos.comment {
            comments.insert(pos.move_index.to_string(), c.clone());
        }
    }
    let dto = RecordDto {
        id: record.id,
        source: record.source.clone(),
        size: record.board_size,
        setup: record
            .handicap_setup
            .iter()
            .map(|&(c, coord)| MoveDto::Play(color_str(c), coord.row, coord.col))
            .collect(),
        moves: record
            .mainline
            .iter()
            .map(|p| match p.mv.kind {
                MoveKind::Play(coord) => MoveDto::Play(color_str(p.mv.color), coord.row, coord.col),
                MoveKind::Pass => MoveDto::Pass(color_str(p.mv.color), "pass".to_owned()),
            })
            .collect(),
        comments,
        metadata: record.metadata.clone(),
        variations_discarded: record.variations_discarded,
    };
    serde_json::to_string(&dto).expect("record serializes")
}

/// Rebuild a record from its JSON line, replaying the moves to restore
/// every board state.
pub fn record_from_json(line: &str) -> Result<GameRecord, CorpusError> {
    let dto: RecordDto = serde_json::from_str(line).map_err(|source| CorpusError::Json {
        line: 0,
        source,
    })?;
    let mut record = GameRecord {
        id: dto.id,
        source: dto.source,
        board_size: dto.size,
        metadata: dto.metadata,
        variations_discarded: dto.variations_discarded,
        ..GameRecord::default()
    };
    for entry in &dto.setup {
        match entry {
            MoveDto::Play(c, r, col) => record
                .handicap_setup
                .push((parse_color(c)?, Coord { row: *r, col: *col })),
            MoveDto::Pass(..) => {
                return Err(CorpusError::BadRecord("pass in setup".into()));
            }
        }
    }
    let mut board = Board::new(record.board_size)
        .map_err(|e| CorpusError::BadRecord(e.to_string()))?;
    for &(color, coord) in &record.handicap_setup {
        board = board
            .with_setup_stone(color, coord)
            .map_err(|e| CorpusError::BadRecord(e.to_string()))?;
    }
    board = board.with_to_move(initial_to_move(&record.handicap_setup));
    record.root_comment = dto.comments.get("0").cloned();
    for (i, entry) in dto.moves.iter().enumerate() {
        let move_index = (i + 1) as u32;
        let mv = match entry {
            MoveDto::Play(c, r, col) => Move {
                color: parse_color(c)?,
                kind: MoveKind::Play(Coord { row: *r, col: *col }),
            },
            MoveDto::Pass(c, _) => Move {
                color: parse_color(c)?,
                kind: MoveKind::Pass,
            },
        };
        board = board.play(mv).map_err(|e| CorpusError::Replay {
            id: record.id,
            reason: format!("move {move_index}: {e}"),
        })?;
        record.mainline.push(AnnotatedPosition {
            mv,
            comment: dto.comments.get(&move_index.to_string()).cloned(),
            board_after: board.clone(),
            move_index,
        });
    }
    Ok(record)
}

pub fn write_corpus<W: Write>(records: &[GameRecord], mut out: W) -> std::io::Result<()> {
    for record in records {
        writeln!(out, "{}", record_to_json(record))?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<GameRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("<line {}>", i + 1),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(record_from_json(&line).map_err(|e| match e {
            CorpusError::Json { source, .. } => CorpusError::Json {
                line: i + 1,
                source,
            },
            other => other,
        })?);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Batch ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Keep games of any supported size instead of 19x19 only.
    pub include_all_sizes: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            include_all_sizes: false,
        }
    }
}

/// Per-directory ingestion summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub files_seen: usize,
    pub games: usize,
    pub comments: usize,
    pub median_comment_words: f64,
    pub variations_discarded: usize,
    pub skipped_wrong_size: usize,
    pub rejected: Vec<(String, String)>,
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} games from {} files ({} rejected, {} skipped for size)",
            self.games,
            self.files_seen,
            self.rejected.len(),
            self.skipped_wrong_size
        )?;
        write!(
            f,
            "{} comments, median length {} words, {} variations discarded",
            self.comments, self.median_comment_words, self.variations_discarded
        )
    }
}

fn median(mut values: Vec<usize>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Parse every `.sgf` file under `dir` (sorted by file name), replay the
/// mainlines and assign sequential ids. Per-file failures are collected
/// in the summary; the batch never aborts.
pub fn ingest_corpus(
    dir: &Path,
    options: &IngestOptions,
) -> Result<(Vec<GameRecord>, CorpusSummary), CorpusError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("sgf"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();

    let mut records = Vec::new();
    let mut summary = CorpusSummary {
        files_seen: paths.len(),
        games: 0,
        comments: 0,
        median_comment_words: 0.0,
        variations_discarded: 0,
        skipped_wrong_size: 0,
        rejected: Vec::new(),
    };
    let mut comment_lengths = Vec::new();

    for path in paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                summary.rejected.push((name, format!("io: {e}")));
                continue;
            }
        };
        let tree = match parse_sgf(&bytes) {
            Ok(t) => t,
            Err(e) => {
                summary.rejected.push((name, e.to_string()));
                continue;
            }
        };
        let mut record = match extract_mainline(&tree) {
            Ok(r) => r,
            Err(e) => {
                summary.rejected.push((name, e.to_string()));
                continue;
            }
        };
        if !options.include_all_sizes && record.board_size != 19 {
            summary.skipped_wrong_size += 1;
            continue;
        }
        record.id = records.len() as u32;
        record.source = name;
        summary.variations_discarded += record.variations_discarded;
        for pos in &record.mainline {
            if let Some(c) = &pos.comment {
                summary.comments += 1;
                comment_lengths.push(text::tokenize(c).len());
            }
        }
        records.push(record);
    }
    summary.games = records.len();
    summary.median_comment_words = median(comment_lengths);
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_record() {
        let tree = parse_sgf(b"(;GM[1]SZ[19];B[pd]C[good move])").unwrap();
        assert_eq!(tree.nodes.len(), 2);
        assert_eq!(tree.nodes[0].single("GM"), Some("1"));
        assert_eq!(tree.nodes[0].single("SZ"), Some("19"));
        assert_eq!(tree.nodes[1].single("B"), Some("pd"));
        assert_eq!(tree.nodes[1].single("C"), Some("good move"));
    }

    #[test]
    fn variations_are_preserved_in_tree() {
        let tree = parse_sgf(b"(;SZ[9];B[aa](;W[bb])(;W[cc]))").unwrap();
        assert_eq!(tree.nodes.len(), 2);
        assert_eq!(tree.children.len(), 2);
        assert_eq!(tree.children[0].nodes[0].single("W"), Some("bb"));
        assert_eq!(tree.children[1].nodes[0].single("W"), Some("cc"));

        let record = extract_mainline(&tree).unwrap();
        assert_eq!(record.mainline.len(), 2);
        assert_eq!(record.variations_discarded, 1);
        assert_eq!(
            record.mainline[1].mv,
            Move::play(Color::White, 1, 1) // bb = col 1, row 1
        );
    }

    #[test]
    fn escaped_bracket_in_comment() {
        let tree = parse_sgf(br"(;SZ[9];B[aa]C[see \] bracket and \\ backslash])").unwrap();
        assert_eq!(
            tree.nodes[1].single("C"),
            Some(r"see ] bracket and \ backslash")
        );
    }

    #[test]
    fn soft_line_break_is_removed() {
        let tree = parse_sgf(b"(;SZ[9];B[aa]C[one\\\ntwo])").unwrap();
        assert_eq!(tree.nodes[1].single("C"), Some("onetwo"));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let err = parse_sgf(b"(;SZ[9];B[aa]").unwrap_err();
        assert_eq!(err.offset, 13);
        let err = parse_sgf(b"(;SZ[9]B[aa]))").unwrap_err();
        assert!(err.reason.contains("trailing"));
        let err = parse_sgf(b"no sgf here").unwrap_err();
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn latin1_default_and_utf8_honored() {
        // 0xE9 is е-acute in Latin-1 and invalid alone in UTF-8.
        let tree = parse_sgf(b"(;SZ[9];B[aa]C[caf\xE9])").unwrap();
        assert_eq!(tree.nodes[1].single("C"), Some("café"));
        let tree = parse_sgf("(;SZ[9]CA[UTF-8];B[aa]C[café])".as_bytes()).unwrap();
        assert_eq!(tree.nodes[1].single("C"), Some("café"));
    }

    #[test]
    fn lowercase_identifier_letters_are_ignored() {
        let tree = parse_sgf(b"(;GaMe[1]SiZe[9];B[aa])").unwrap();
        assert_eq!(tree.nodes[0].single("GM"), Some("1"));
        assert_eq!(tree.nodes[0].single("SZ"), Some("9"));
    }

    #[test]
    fn serialize_round_trip() {
        let src = br"(;GM[1]SZ[19]CA[UTF-8]PB[A \] B];B[pd]C[first](;W[dd]C[var])(;W[dp]))";
        let tree = parse_sgf(src).unwrap();
        let text = serialize_sgf(&tree);
        let reparsed = parse_sgf(text.as_bytes()).unwrap();
        assert_eq!(tree, reparsed);
    }

    #[test]
    fn mainline_comments_attach_to_their_moves() {
        let tree =
            parse_sgf(b"(;GM[1]SZ[19]C[hello];B[pd]C[move one];W[dd];B[dp]C[move three])")
                .unwrap();
        let record = extract_mainline(&tree).unwrap();
        assert_eq!(record.mainline.len(), 3);
        assert_eq!(record.root_comment.as_deref(), Some("hello"));
        assert_eq!(record.mainline[0].comment.as_deref(), Some("move one"));
        assert_eq!(record.mainline[1].comment, None);
        assert_eq!(record.mainline[2].comment.as_deref(), Some("move three"));
        assert_eq!(record.mainline[2].move_index, 3);
    }

    #[test]
    fn handicap_setup_stones_present_after_move_one() {
        let tree = parse_sgf(b"(;GM[1]SZ[19]HA[2]AB[dd][pd];W[dp])").unwrap();
        let record = extract_mainline(&tree).unwrap();
        assert_eq!(record.handicap_setup.len(), 2);
        let board = &record.mainline[0].board_after;
        assert_eq!(board.stone_at(Coord::new(3, 3)), Some(Color::Black));
        assert_eq!(board.stone_at(Coord::new(3, 15)), Some(Color::Black));
        assert_eq!(board.stone_at(Coord::new(15, 3)), Some(Color::White));
        // White moves first after a black handicap setup.
        assert_eq!(record.setup_board().to_move(), Color::White);
    }

    #[test]
    fn pass_encodings() {
        let tree = parse_sgf(b"(;SZ[19];B[];W[tt])").unwrap();
        let record = extract_mainline(&tree).unwrap();
        assert_eq!(record.mainline[0].mv.kind, MoveKind::Pass);
        assert_eq!(record.mainline[1].mv.kind, MoveKind::Pass);
    }

    #[test]
    fn mixed_move_node_rejects_game() {
        let tree = parse_sgf(b"(;SZ[9];B[aa]W[bb])").unwrap();
        assert_eq!(
            extract_mainline(&tree).unwrap_err(),
            RecordError::MixedMoveNode(1)
        );
    }

    #[test]
    fn illegal_replay_rejects_game() {
        let tree = parse_sgf(b"(;SZ[9];B[aa];W[aa])").unwrap();
        let err = extract_mainline(&tree).unwrap_err();
        assert_eq!(
            err,
            RecordError::IllegalGame {
                move_index: 2,
                reason: "point is occupied".into()
            }
        );
    }

    #[test]
    fn out_of_bounds_move_rejects_game() {
        let tree = parse_sgf(b"(;SZ[9];B[jj])").unwrap();
        assert!(matches!(
            extract_mainline(&tree).unwrap_err(),
            RecordError::BadCoordinate { move_index: 1, .. }
        ));
    }

    #[test]
    fn non_go_games_are_rejected() {
        let tree = parse_sgf(b"(;GM[2]SZ[19];B[aa])").unwrap();
        assert_eq!(
            extract_mainline(&tree).unwrap_err(),
            RecordError::UnsupportedGame("2".into())
        );
    }

    #[test]
    fn record_json_round_trip() {
        let tree = parse_sgf(
            b"(;GM[1]SZ[19]PB[someone]AB[dd];W[dp]C[first];B[pp];W[]C[passed])",
        )
        .unwrap();
        let mut record = extract_mainline(&tree).unwrap();
        record.id = 7;
        record.source = "x.sgf".into();
        let json = record_to_json(&record);
        let back = record_from_json(&json).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn corpus_round_trip_via_io() {
        let tree = parse_sgf(b"(;GM[1]SZ[19];B[pd]C[nice];W[dd])").unwrap();
        let record = extract_mainline(&tree).unwrap();
        let mut buf = Vec::new();
        write_corpus(&[record.clone()], &mut buf).unwrap();
        let back = read_corpus(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], record);
    }

    #[test]
    fn ingest_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("b_good.sgf"),
            b"(;GM[1]SZ[19];B[pd]C[one two three];W[dd])",
        )
        .unwrap();
        std::fs::write(dir.path().join("a_corrupt.sgf"), b"(;SZ[19];B[pd]").unwrap();
        std::fs::write(dir.path().join("c_small.sgf"), b"(;GM[1]SZ[9];B[aa])").unwrap();
        std::fs::write(dir.path().join("ignored.txt"), b"not sgf").unwrap();

        let (records, summary) =
            ingest_corpus(dir.path(), &IngestOptions::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].source, "b_good.sgf");
        assert_eq!(summary.files_seen, 3);
        assert_eq!(summary.games, 1);
        assert_eq!(summary.comments, 1);
        assert_eq!(summary.median_comment_words, 3.0);
        assert_eq!(summary.skipped_wrong_size, 1);
        assert_eq!(summary.rejected.len(), 1);
        assert_eq!(summary.rejected[0].0, "a_corrupt.sgf");

        let all = ingest_corpus(
            dir.path(),
            &IngestOptions {
                include_all_sizes: true,
            },
        )
        .unwrap();
        assert_eq!(all.0.len(), 2);
    }

    #[test]
    fn ingest_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let (records, summary) = ingest_corpus(dir.path(), &IngestOptions::default()).unwrap();
        assert!(records.is_empty());
        assert_eq!(summary.games, 0);
        assert_eq!(summary.comments, 0);
        assert_eq!(summary.median_comment_words, 0.0);
    }
}
