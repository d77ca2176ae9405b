use std::collections::BTreeMap;

use serde::Serialize;

use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Token {
    pub thread: u32,
    pub value: Value,
}

/// The ILDR adder: moves a token `diff` iterations ahead, value untouched.
pub fn ildr_retag(token: Token, diff: u32) -> Token {
    Token { thread: token.thread + diff, value: token.value }
}

/// Retag, or `None` when the target iteration is outside the thread group.
pub fn retag_within(token: Token, diff: u32, n_threads: u32) -> Option<Token> {
    let t = ildr_retag(token, diff);
    (t.thread < n_threads).then_some(t)
}

/// Token buffer of one input slot with credit accounting: tokens already on
/// their way count against the depth, so a landing never overflows.
#[derive(Clone, Debug)]
pub struct TokenBuffer {
    tokens: BTreeMap<u32, Value>,
    in_flight: u32,
    depth: u32,
}

impl TokenBuffer {
    pub fn new(depth: u32) -> Self {
        TokenBuffer { tokens: BTreeMap::new(), in_flight: 0, depth }
    }

    pub fn has_credit(&self) -> bool {
        (self.tokens.len() as u32 + self.in_flight) < self.depth
    }

    /// Claims a credit for a token that lands later.
    pub fn reserve(&mut self) {
        debug_assert!(self.has_credit());
        self.in_flight += 1;
    }

    /// Delivers a token whose credit was reserved.
    pub fn land(&mut self, tok: Token) {
        self.in_flight -= 1;
        self.put(tok);
    }

    /// Writes a token directly, consuming a credit on the spot.
    pub fn put(&mut self, tok: Token) {
        let prev = self.tokens.insert(tok.thread, tok.value);
        assert!(prev.is_none(), "two tokens for thread {} in one slot", tok.thread);
        assert!(self.tokens.len() as u32 + self.in_flight <= self.depth, "token buffer overflow");
    }

    pub fn contains(&self, thread: u32) -> bool {
        self.tokens.contains_key(&thread)
    }

    pub fn take(&mut self, thread: u32) -> Option<Value> {
        self.tokens.remove(&thread)
    }

    pub fn threads(&self) -> impl Iterator<Item = u32> + '_ {
        self.tokens.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn in_flight(&self) -> u32 {
        self.in_flight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retag_adds_diff() {
        let t = Token { thread: 5, value: Value::Int(42) };
        assert_eq!(ildr_retag(t, 1), Token { thread: 6, value: Value::Int(42) });
        let t = Token { thread: 0, value: Value::Int(-7) };
        assert_eq!(ildr_retag(t, 3), Token { thread: 3, value: Value::Int(-7) });
        let t = Token { thread: 511, value: Value::Int(1) };
        assert_eq!(retag_within(t, 1, 512), None);
        assert_eq!(retag_within(t, 1, 513).map(|t| t.thread), Some(512));
    }

    #[test]
    fn credits_cover_in_flight_tokens() {
        let mut b = TokenBuffer::new(2);
        b.reserve();
        b.put(Token { thread: 0, value: Value::Int(1) });
        assert!(!b.has_credit());
        b.land(Token { thread: 1, value: Value::Int(2) });
        assert_eq!(b.threads().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(b.take(0), Some(Value::Int(1)));
        assert!(b.has_credit());
    }

    #[test]
    #[should_panic(expected = "two tokens")]
    fn duplicate_thread_panics() {
        let mut b = TokenBuffer::new(4);
        b.put(Token { thread: 3, value: Value::Int(1) });
        b.put(Token { thread: 3, value: Value::Int(2) });
    }
}
