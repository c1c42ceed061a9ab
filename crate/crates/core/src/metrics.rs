//! Per-thread counters of the expensive primitive calls.
//!
//! The scaling tests compare these against closed-form cost models, so they
//! count calls, not time.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub client_encrypt: u64,
    pub server_reencrypt: u64,
    pub client_trapdoor: u64,
    pub server_trapdoor: u64,
    pub matches: u64,
}

impl OpCounts {
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            client_encrypt: self.client_encrypt - earlier.client_encrypt,
            server_reencrypt: self.server_reencrypt - earlier.server_reencrypt,
            client_trapdoor: self.client_trapdoor - earlier.client_trapdoor,
            server_trapdoor: self.server_trapdoor - earlier.server_trapdoor,
            matches: self.matches - earlier.matches,
        }
    }
}

thread_local! {
    static COUNTS: Cell<OpCounts> = Cell::new(OpCounts::default());
}

pub(crate) fn record(f: impl FnOnce(&mut OpCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

/// Current counts for the calling thread.
pub fn current() -> OpCounts {
    COUNTS.with(|c| c.get())
}

/// Runs `f` and returns its result with the operations it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounts) {
    let before = current();
    let out = f();
    (out, current().since(&before))
}
