// SPDX-License-Identifier: Apache-2.0

use std::cell::Cell;
use std::fmt;

thread_local! {
    static IN_ATTACKER: Cell<bool> = const { Cell::new(false) };
}

/// Marks the current thread as running attacker code until dropped.
pub(crate) struct AttackerScope {
    prev: bool,
}

impl AttackerScope {
    pub(crate) fn enter() -> Self {
        AttackerScope { prev: IN_ATTACKER.with(|f| f.replace(true)) }
    }
}

impl Drop for AttackerScope {
    fn drop(&mut self) {
        IN_ATTACKER.with(|f| f.set(self.prev));
    }
}

pub fn in_attacker_code() -> bool {
    IN_ATTACKER.with(|f| f.get())
}

/// Ground truth held for the harness. Reading it from inside an attacker
/// callback panics.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret<T>(T);

impl<T> Secret<T> {
    pub fn new(value: T) -> Self {
        Secret(value)
    }

    pub fn reveal(&self) -> &T {
        assert!(!in_attacker_code(), "attacker code path read victim secret state");
        &self.0
    }
}

impl<T> fmt::Debug for Secret<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(..)")
    }
}
