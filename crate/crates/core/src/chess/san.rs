//! Standard Algebraic Notation: resolving SAN tokens against a position and
//! writing moves back out.

use crate::chess::board::{Board, PieceKind, Square};
use crate::chess::fen::to_fen;
use crate::chess::movegen::{apply_unchecked, in_check, legal_moves, outcome, MoveRecord, Outcome};
use crate::error::{Error, Result};

/// Resolves a SAN token (annotation suffixes such as `+`, `#`, `!?` allowed)
/// to the unique legal move it names.
pub fn parse_san(board: &Board, san: &str) -> Result<MoveRecord> {
    let illegal = || Error::IllegalMove {
        san: san.to_string(),
        fen: to_fen(board),
    };
    let token = san.trim_end_matches(['+', '#', '!', '?']);
    let legal = legal_moves(board);

    let castle = match token {
        "O-O" | "0-0" => Some(6),
        "O-O-O" | "0-0-0" => Some(2),
        _ => None,
    };
    if let Some(file) = castle {
        let king = board.king_square(board.side_to_move).ok_or_else(illegal)?;
        return legal
            .into_iter()
            .find(|m| m.from == king && m.to.rank() == king.rank() && m.to.file() == file && king.file() == 4)
            .ok_or_else(illegal);
    }

    let mut body = token;
    let mut promotion = None;
    if let Some(idx) = body.find('=') {
        promotion = Some(
            body[idx + 1..]
                .chars()
                .next()
                .and_then(PieceKind::from_letter)
                .ok_or_else(illegal)?,
        );
        body = &body[..idx];
    } else if let Some(last) = body.chars().last() {
        // Some writers omit the '=' as in `e8Q`.
        if body.len() >= 3 && "QRBN".contains(last) && body.as_bytes()[0].is_ascii_lowercase() {
            promotion = PieceKind::from_letter(last);
            body = &body[..body.len() - 1];
        }
    }

    let (kind, rest) = match body.chars().next() {
        Some(c @ ('N' | 'B' | 'R' | 'Q' | 'K')) => (PieceKind::from_letter(c).unwrap(), &body[1..]),
        Some(_) => (PieceKind::Pawn, body),
        None => return Err(illegal()),
    };
    let rest: String = rest.chars().filter(|&c| c != 'x' && c != '-' && c != ':').collect();
    if rest.len() < 2 {
        return Err(illegal());
    }
    let to = Square::parse(&rest[rest.len() - 2..]).ok_or_else(illegal)?;
    let disambig = &rest[..rest.len() - 2];
    let mut from_file = None;
    let mut from_rank = None;
    for c in disambig.chars() {
        match c {
            'a'..='h' => from_file = Some(c as u8 - b'a'),
            '1'..='8' => from_rank = Some(c as u8 - b'1'),
            _ => return Err(illegal()),
        }
    }

    let mut candidates = legal.into_iter().filter(|m| {
        m.to == to
            && board.get(m.from).map(|p| p.kind) == Some(kind)
            && m.promotion == promotion
            && from_file.is_none_or(|f| m.from.file() == f)
            && from_rank.is_none_or(|r| m.from.rank() == r)
    });
    let first = candidates.next().ok_or_else(illegal)?;
    if candidates.next().is_some() {
        return Err(illegal());
    }
    Ok(first)
}

/// Writes a legal move in SAN with check/mate suffix.
pub fn to_san(board: &Board, mv: MoveRecord) -> String {
    let Some(piece) = board.get(mv.from) else {
        return mv.to_uci();
    };
    let mut out = String::new();
    let capture = board.get(mv.to).is_some() || (piece.kind == PieceKind::Pawn && mv.from.file() != mv.to.file());

    if piece.kind == PieceKind::King && (mv.from.file() as i8 - mv.to.file() as i8).abs() == 2 {
        out.push_str(if mv.to.file() == 6 { "O-O" } else { "O-O-O" });
    } else if piece.kind == PieceKind::Pawn {
        if capture {
            out.push((b'a' + mv.from.file()) as char);
            out.push('x');
        }
        out.push_str(&mv.to.to_string());
        if let Some(p) = mv.promotion {
            out.push('=');
            out.push(p.letter());
        }
    } else {
        out.push(piece.kind.letter());
        let rivals: Vec<MoveRecord> = legal_moves(board)
            .into_iter()
            .filter(|m| m.to == mv.to && m.from != mv.from && board.get(m.from).map(|p| p.kind) == Some(piece.kind))
            .collect();
        if !rivals.is_empty() {
            let same_file = rivals.iter().any(|m| m.from.file() == mv.from.file());
            let same_rank = rivals.iter().any(|m| m.from.rank() == mv.from.rank());
            if !same_file {
                out.push((b'a' + mv.from.file()) as char);
            } else if !same_rank {
                out.push((b'1' + mv.from.rank()) as char);
            } else {
                out.push_str(&mv.from.to_string());
            }
        }
        if capture {
            out.push('x');
        }
        out.push_str(&mv.to.to_string());
    }

    let next = apply_unchecked(board, mv);
    if in_check(&next, next.side_to_move) {
        out.push(if outcome(&next) == Outcome::Checkmate { '#' } else { '+' });
    }
    out
}
