//! PGN reader and writer.
//!
//! Only the main line is kept. Comments, NAGs, escape lines and (nested)
//! variations are skipped. A game containing an unparseable or illegal move
//! or a malformed header is dropped and counted, never fatal.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chess::board::Board;
use crate::chess::fen::parse_fen;
use crate::chess::movegen::{apply_legal, apply_unchecked, MoveRecord};
use crate::chess::san::{parse_san, to_san};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    pub headers: Vec<(String, String)>,
    pub initial: Board,
    pub moves: Vec<MoveRecord>,
}

impl Game {
    pub fn new(initial: Board, moves: Vec<MoveRecord>) -> Self {
        Game {
            headers: Vec::new(),
            initial,
            moves,
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PgnWarning {
    /// Zero-based index of the game in the input, counting skipped ones.
    pub game_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct PgnParse {
    pub games: Vec<Game>,
    pub skipped: usize,
    pub warnings: Vec<PgnWarning>,
}

struct Pending {
    headers: Vec<(String, String)>,
    board: Option<Board>,
    initial: Option<Board>,
    moves: Vec<MoveRecord>,
    error: Option<String>,
    touched: bool,
}

impl Pending {
    fn new() -> Self {
        Pending {
            headers: Vec::new(),
            board: None,
            initial: None,
            moves: Vec::new(),
            error: None,
            touched: false,
        }
    }

    fn has_movetext(&self) -> bool {
        self.board.is_some()
    }

    fn start_movetext(&mut self) {
        if self.board.is_some() || self.error.is_some() {
            return;
        }
        let fen = self.headers.iter().find(|(k, _)| k == "FEN").map(|(_, v)| v.clone());
        let initial = match fen {
            Some(f) => match parse_fen(&f) {
                Ok(b) => b,
                Err(e) => {
                    self.error = Some(e.to_string());
                    return;
                }
            },
            None => Board::initial(),
        };
        self.initial = Some(initial.clone());
        self.board = Some(initial);
    }

    fn play(&mut self, san: &str) {
        self.touched = true;
        self.start_movetext();
        if self.error.is_some() {
            return;
        }
        let board = self.board.as_ref().expect("movetext started");
        match parse_san(board, san) {
            Ok(mv) => {
                self.board = Some(apply_unchecked(board, mv));
                self.moves.push(mv);
            }
            Err(e) => self.error = Some(e.to_string()),
        }
    }
}

pub fn parse_pgn(text: &str) -> PgnParse {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = PgnParse::default();
    let mut game_index = 0usize;
    let mut pending = Pending::new();

    let finish = |pending: &mut Pending, out: &mut PgnParse, game_index: &mut usize| {
        let done = std::mem::replace(pending, Pending::new());
        if !done.touched && done.headers.is_empty() {
            return;
        }
        match done.error {
            Some(message) => {
                log::warn!("skipping game {game_index}: {message}");
                out.skipped += 1;
                out.warnings.push(PgnWarning {
                    game_index: *game_index,
                    message,
                });
            }
            None => out.games.push(Game {
                headers: done.headers,
                initial: done.initial.unwrap_or_else(Board::initial),
                moves: done.moves,
            }),
        }
        *game_index += 1;
    };

    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line_start = true;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let at_line_start = std::mem::replace(&mut line_start, false);
        match c {
            '%' if at_line_start => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '{' => {
                while i < chars.len() && chars[i] != '}' {
                    i += 1;
                }
                i += 1;
            }
            '(' => i = skip_variation(&chars, i),
            ')' => i += 1,
            '[' => {
                if pending.has_movetext() || pending.touched {
                    finish(&mut pending, &mut out, &mut game_index);
                }
                let (end, header) = read_header(&chars, i);
                i = end;
                match header {
                    Some(h) => pending.headers.push(h),
                    None => {
                        if pending.error.is_none() {
                            pending.error = Some("malformed header".to_string());
                        }
                    }
                }
            }
            '$' => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"{}();[".contains(chars[i]) {
                    i += 1;
                }
                let token: String = chars[start..i].iter().collect();
                match token.as_str() {
                    "1-0" | "0-1" | "1/2-1/2" | "*" => {
                        pending.touched = true;
                        finish(&mut pending, &mut out, &mut game_index);
                    }
                    _ => {
                        let san = strip_move_number(&token);
                        if !san.is_empty() && !is_annotation(san) {
                            pending.play(san);
                        }
                    }
                }
            }
        }
    }
    finish(&mut pending, &mut out, &mut game_index);
    out
}

fn is_annotation(token: &str) -> bool {
    token.chars().all(|c| "!?+#=-".contains(c)) && token != "--"
}

/// Strips `12.` / `12...` prefixes; returns "" for a bare move number.
fn strip_move_number(token: &str) -> &str {
    let digits = token.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return token;
    }
    let rest = &token[digits..];
    if rest.is_empty() {
        return "";
    }
    if rest.starts_with('.') {
        return rest.trim_start_matches('.');
    }
    token
}

fn skip_variation(chars: &[char], mut i: usize) -> usize {
    let mut depth = 0usize;
    while i < chars.len() {
        match chars[i] {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return i + 1;
                }
            }
            '{' => {
                while i < chars.len() && chars[i] != '}' {
                    i += 1;
                }
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    i
}

/// Reads `[Name "value"]` starting at `start` (the '['). Returns the index
/// after the header and the parsed pair, or `None` when malformed.
fn read_header(chars: &[char], start: usize) -> (usize, Option<(String, String)>) {
    let mut i = start + 1;
    let mut body = String::new();
    let mut in_quotes = false;
    let mut closed = false;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' && !in_quotes {
            break;
        }
        if in_quotes && c == '\\' && i + 1 < chars.len() {
            body.push(c);
            body.push(chars[i + 1]);
            i += 2;
            continue;
        }
        if c == '"' {
            in_quotes = !in_quotes;
        } else if c == ']' && !in_quotes {
            closed = true;
            i += 1;
            break;
        }
        body.push(c);
        i += 1;
    }
    if !closed {
        return (i, None);
    }
    let body = body.trim();
    let Some(space) = body.find(char::is_whitespace) else {
        return (i, None);
    };
    let name = body[..space].to_string();
    let value = body[space..].trim();
    if name.is_empty()
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        || value.len() < 2
        || !value.starts_with('"')
        || !value.ends_with('"')
    {
        return (i, None);
    }
    let value = value[1..value.len() - 1].replace("\\\"", "\"").replace("\\\\", "\\");
    (i, Some((name, value)))
}

/// Writes a game as PGN with SAN movetext. Moves must be legal.
pub fn write_pgn(game: &Game, result: &str) -> String {
    let mut out = String::new();
    for (k, v) in &game.headers {
        let v = v.replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(out, "[{k} \"{v}\"]");
    }
    if !game.headers.iter().any(|(k, _)| k == "Result") {
        let _ = writeln!(out, "[Result \"{result}\"]");
    }
    out.push('\n');
    let mut board = game.initial.clone();
    let mut line = String::new();
    let mut fullmove = 1;
    for (ply, mv) in game.moves.iter().enumerate() {
        let mut token = String::new();
        if board.side_to_move == crate::chess::board::Color::White {
            let _ = write!(token, "{fullmove}. ");
        } else if ply == 0 {
            let _ = write!(token, "{fullmove}... ");
        }
        token.push_str(&to_san(&board, *mv));
        if board.side_to_move == crate::chess::board::Color::Black {
            fullmove += 1;
        }
        board = apply_legal(&board, *mv).unwrap_or_else(|| apply_unchecked(&board, *mv));
        if line.len() + token.len() + 1 > 79 {
            out.push_str(line.trim_end());
            out.push('\n');
            line.clear();
        }
        line.push_str(&token);
        line.push(' ');
    }
    line.push_str(result);
    out.push_str(&line);
    out.push_str("\n\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::board::Square;

    fn sq(name: &str) -> Square {
        Square::parse(name).unwrap()
    }

    #[test]
    fn short_game() {
        let parsed = parse_pgn("1. e4 e5 2. Nf3 *");
        assert_eq!(parsed.games.len(), 1);
        assert_eq!(
            parsed.games[0].moves,
            vec![
                MoveRecord::new(sq("e2"), sq("e4")),
                MoveRecord::new(sq("e7"), sq("e5")),
                MoveRecord::new(sq("g1"), sq("f3")),
            ]
        );
    }

    #[test]
    fn empty_input() {
        let parsed = parse_pgn("");
        assert!(parsed.games.is_empty());
        assert_eq!(parsed.skipped, 0);
        assert!(parse_pgn("  \n\n ").games.is_empty());
    }

    #[test]
    fn comments_variations_nags_and_headers() {
        let text = r#"[Event "Test \"quoted\""]
[White "A"]
[Black "B"]

1. e4 {best by test} e5 $1 (1... c5 2. Nf3 (2. c3) d6) 2. Nf3!? ; rest of line
Nc6 3. Bb5 a6 1-0

[Event "Second"]

1.d4 d5 2.c4 1/2-1/2
"#;
        let parsed = parse_pgn(text);
        assert_eq!(parsed.games.len(), 2, "{:?}", parsed.warnings);
        assert_eq!(parsed.games[0].moves.len(), 6);
        assert_eq!(parsed.games[0].header("Event"), Some("Test \"quoted\""));
        assert_eq!(parsed.games[1].moves.len(), 3);
    }

    #[test]
    fn illegal_move_skips_game_with_warning() {
        let text = "1. e4 e5 2. Ke3 Nc6 *\n\n1. d4 *";
        let parsed = parse_pgn(text);
        assert_eq!(parsed.games.len(), 1);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.warnings[0].game_index, 0);
        assert_eq!(parsed.games[0].moves.len(), 1);
    }

    #[test]
    fn malformed_header_skips_game() {
        let text = "[Event Unquoted]\n\n1. e4 *\n\n[Event \"ok\"]\n\n1. d4 *";
        let parsed = parse_pgn(text);
        assert_eq!(parsed.games.len(), 1);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.games[0].moves[0].from, sq("d2"));
    }

    #[test]
    fn white_castling() {
        let parsed = parse_pgn("1. e4 e5 2. Nf3 Nc6 3. Bc4 Bc5 4. O-O *");
        let mv = *parsed.games[0].moves.last().unwrap();
        assert_eq!((mv.from.index(), mv.to.index()), (4, 6));
    }

    #[test]
    fn fen_header_and_black_first() {
        let text = "[SetUp \"1\"]\n[FEN \"4k3/8/8/8/8/8/4P3/4K3 b - - 0 1\"]\n\n1... Kd7 2. e4 *";
        let parsed = parse_pgn(text);
        assert_eq!(parsed.games.len(), 1, "{:?}", parsed.warnings);
        assert_eq!(parsed.games[0].moves.len(), 2);
    }

    #[test]
    fn writer_round_trip() {
        let parsed = parse_pgn("1. e4 e5 2. Nf3 Nc6 3. Bc4 Bc5 4. O-O Nf6 5. d4 exd4 *");
        let game = &parsed.games[0];
        let text = write_pgn(game, "*");
        let again = parse_pgn(&text);
        assert_eq!(again.games[0].moves, game.moves);
    }
}
