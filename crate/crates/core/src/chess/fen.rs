//! FEN reading and writing. Move counters are accepted but not stored.

use crate::chess::board::{sq, Board, CastlingRights, Color, Piece, Square};
use crate::error::{Error, Result};

pub const INITIAL_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

pub fn parse_fen(fen: &str) -> Result<Board> {
    let bad = |reason: &str| Error::InvalidFen {
        fen: fen.to_string(),
        reason: reason.to_string(),
    };
    let mut fields = fen.split_whitespace();
    let placement = fields.next().ok_or_else(|| bad("empty"))?;
    let mut board = Board::empty();

    let ranks: Vec<&str> = placement.split('/').collect();
    if ranks.len() != 8 {
        return Err(bad("placement needs 8 ranks"));
    }
    for (i, row) in ranks.iter().enumerate() {
        let rank = 7 - i as u8;
        let mut file = 0u8;
        for c in row.chars() {
            if let Some(d) = c.to_digit(10) {
                if !(1..=8).contains(&d) {
                    return Err(bad("bad empty-square count"));
                }
                file += d as u8;
            } else {
                let piece = Piece::from_fen_char(c).ok_or_else(|| bad("unknown piece letter"))?;
                if file >= 8 {
                    return Err(bad("rank overflows"));
                }
                board.set(sq(rank, file), Some(piece));
                file += 1;
            }
            if file > 8 {
                return Err(bad("rank overflows"));
            }
        }
        if file != 8 {
            return Err(bad("rank has fewer than 8 squares"));
        }
    }

    board.side_to_move = match fields.next().unwrap_or("w") {
        "w" => Color::White,
        "b" => Color::Black,
        _ => return Err(bad("side to move must be w or b")),
    };

    let mut castling = CastlingRights::NONE;
    let castle_field = fields.next().unwrap_or("-");
    if castle_field != "-" {
        for c in castle_field.chars() {
            let idx = match c {
                'K' => 0,
                'Q' => 1,
                'k' => 2,
                'q' => 3,
                _ => return Err(bad("bad castling field")),
            };
            castling.0[idx] = true;
        }
    }
    board.castling = castling;

    board.en_passant = match fields.next().unwrap_or("-") {
        "-" => None,
        s => Some(Square::parse(s).ok_or_else(|| bad("bad en passant square"))?),
    };

    board.validate().map_err(|e| bad(&e.to_string()))?;
    sanitize_castling(&mut board);
    Ok(board)
}

/// Drops castling rights that the piece placement cannot support.
fn sanitize_castling(board: &mut Board) {
    use crate::chess::board::PieceKind::{King, Rook};
    let has = |b: &Board, name: &str, kind, color| b.get(Square::parse(name).unwrap()) == Some(Piece::new(kind, color));
    let w_king = has(board, "e1", King, Color::White);
    let b_king = has(board, "e8", King, Color::Black);
    let keep = [
        w_king && has(board, "h1", Rook, Color::White),
        w_king && has(board, "a1", Rook, Color::White),
        b_king && has(board, "h8", Rook, Color::Black),
        b_king && has(board, "a8", Rook, Color::Black),
    ];
    for (right, ok) in board.castling.0.iter_mut().zip(keep) {
        *right &= ok;
    }
}

pub fn to_fen(board: &Board) -> String {
    let mut out = String::with_capacity(80);
    for rank in (0..8u8).rev() {
        let mut empty = 0;
        for file in 0..8u8 {
            match board.get(sq(rank, file)) {
                Some(p) => {
                    if empty > 0 {
                        out.push(char::from(b'0' + empty));
                        empty = 0;
                    }
                    out.push(p.fen_char());
                }
                None => empty += 1,
            }
        }
        if empty > 0 {
            out.push(char::from(b'0' + empty));
        }
        if rank > 0 {
            out.push('/');
        }
    }
    out.push(' ');
    out.push(match board.side_to_move {
        Color::White => 'w',
        Color::Black => 'b',
    });
    out.push(' ');
    let castle: String = ['K', 'Q', 'k', 'q']
        .iter()
        .zip(board.castling.0)
        .filter(|(_, on)| *on)
        .map(|(c, _)| *c)
        .collect();
    out.push_str(if castle.is_empty() { "-" } else { &castle });
    out.push(' ');
    match board.en_passant {
        Some(s) => out.push_str(&s.to_string()),
        None => out.push('-'),
    }
    out.push_str(" 0 1");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_round_trip() {
        let b = parse_fen(INITIAL_FEN).unwrap();
        assert_eq!(b, Board::initial());
        assert_eq!(to_fen(&b), INITIAL_FEN);
    }

    #[test]
    fn en_passant_and_side() {
        let fen = "rnbqkbnr/pppp1ppp/8/4p3/4P3/8/PPPP1PPP/RNBQKBNR w KQkq e6 0 2";
        let b = parse_fen(fen).unwrap();
        assert_eq!(b.en_passant, Square::parse("e6"));
        assert_eq!(to_fen(&b), fen.replace(" 0 2", " 0 1"));
    }

    #[test]
    fn rejects_garbage() {
        for fen in [
            "",
            "8/8/8/8/8/8/8/8 w - -",
            "rnbqkbnr/ppp w",
            "9/8/8/8/8/8/8/K6k w - -",
            "4k3/8/8/8/8/8/8/4K3 x - -",
        ] {
            assert!(parse_fen(fen).is_err(), "{fen}");
        }
    }

    #[test]
    fn castling_rights_are_sanitized() {
        let b = parse_fen("4k3/8/8/8/8/8/8/4K3 w KQkq - 0 1").unwrap();
        assert_eq!(b.castling, CastlingRights::NONE);
    }
}
