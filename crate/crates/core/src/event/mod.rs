//! Canonical browser event records.
//!
//! Every record carries the common attributes (client time, timezone offset,
//! user, session, and where applicable window and tab identifiers) plus a
//! kind-specific payload. Records are plain immutable values; see [`wire`]
//! for the newline-delimited text encoding.

mod url;
pub mod wire;

pub use self::url::{hash_url, UrlError, UrlRef};
pub use self::wire::{parse_event, serialize_event, ParseError, FILE_HEADER};

pub type UserId = u64;
pub type SessionId = u64;
pub type WindowId = u64;
pub type TabId = u64;

/// Valid UTC offsets span UTC-14:00 to UTC+14:00.
pub const MAX_TZ_OFFSET_MINUTES: i32 = 840;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventRecord {
    /// Client time, epoch milliseconds UTC.
    pub time: i64,
    /// UTC minus client-local time, in minutes (GMT+2 is -120).
    pub tz_offset: i32,
    pub user_id: UserId,
    pub window_id: Option<WindowId>,
    pub session_id: SessionId,
    pub tab_id: Option<TabId>,
    pub kind: EventKind,
}

/// Which identifiers a kind is scoped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Session,
    Window,
    Tab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowState {
    Normal,
    Minimized,
    Maximized,
    Fullscreen,
}

impl WindowState {
    pub const ALL: [WindowState; 4] =
        [WindowState::Normal, WindowState::Minimized, WindowState::Maximized, WindowState::Fullscreen];

    pub fn as_str(self) -> &'static str {
        match self {
            WindowState::Normal => "normal",
            WindowState::Minimized => "minimized",
            WindowState::Maximized => "maximized",
            WindowState::Fullscreen => "fullscreen",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// What triggered a page load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadCause {
    Link,
    Bookmark,
    Typed,
    Reload,
    Other,
}

impl LoadCause {
    pub const ALL: [LoadCause; 5] =
        [LoadCause::Link, LoadCause::Bookmark, LoadCause::Typed, LoadCause::Reload, LoadCause::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            LoadCause::Link => "link",
            LoadCause::Bookmark => "bookmark",
            LoadCause::Typed => "typed",
            LoadCause::Reload => "reload",
            LoadCause::Other => "other",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventKind {
    SessionStart,
    /// `estimated` marks a close synthesized by the cleaning stage.
    SessionClose {
        estimated: bool,
    },
    WindowOpen,
    WindowClose {
        estimated: bool,
    },
    WindowState {
        state: WindowState,
    },
    WindowFocus {
        focused: bool,
    },
    /// `opener` is the tab (same window) whose page spawned this tab, if known.
    TabOpen {
        opener: Option<TabId>,
    },
    TabClose,
    TabSelect,
    Activity {
        active: bool,
    },
    PageLoad {
        url: UrlRef,
        cause: LoadCause,
        background: bool,
    },
    PageVisibility {
        visible: bool,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionStart => "session_start",
            EventKind::SessionClose { .. } => "session_close",
            EventKind::WindowOpen => "window_open",
            EventKind::WindowClose { .. } => "window_close",
            EventKind::WindowState { .. } => "window_state",
            EventKind::WindowFocus { .. } => "window_focus",
            EventKind::TabOpen { .. } => "tab_open",
            EventKind::TabClose => "tab_close",
            EventKind::TabSelect => "tab_select",
            EventKind::Activity { .. } => "activity",
            EventKind::PageLoad { .. } => "page_load",
            EventKind::PageVisibility { .. } => "page_visibility",
        }
    }

    pub fn scope(&self) -> Scope {
        match self {
            EventKind::SessionStart | EventKind::SessionClose { .. } | EventKind::Activity { .. } => Scope::Session,
            EventKind::WindowOpen
            | EventKind::WindowClose { .. }
            | EventKind::WindowState { .. }
            | EventKind::WindowFocus { .. } => Scope::Window,
            EventKind::TabOpen { .. }
            | EventKind::TabClose
            | EventKind::TabSelect
            | EventKind::PageLoad { .. }
            | EventKind::PageVisibility { .. } => Scope::Tab,
        }
    }

    /// Lifecycle kinds that may legitimately occur only once per entity.
    pub fn is_lifecycle_singleton(&self) -> bool {
        matches!(
            self,
            EventKind::SessionStart
                | EventKind::SessionClose { .. }
                | EventKind::WindowOpen
                | EventKind::WindowClose { .. }
                | EventKind::TabOpen { .. }
                | EventKind::TabClose
        )
    }
}

impl EventRecord {
    /// Checks every record-level invariant: time and offset ranges,
    /// identifier presence matching the kind's scope, digest shape.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.time <= 0 {
            return Err(ParseError::RangeError(format!("time must be positive, got {}", self.time)));
        }
        if self.tz_offset.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(ParseError::RangeError(format!(
                "tz offset {} outside [-{MAX_TZ_OFFSET_MINUTES}, {MAX_TZ_OFFSET_MINUTES}]",
                self.tz_offset
            )));
        }
        let scope = self.kind.scope();
        let kind = self.kind.name();
        match (scope >= Scope::Window, self.window_id.is_some()) {
            (true, false) => return Err(ParseError::SchemaViolation(format!("{kind} requires wid"))),
            (false, true) => return Err(ParseError::SchemaViolation(format!("{kind} must not carry wid"))),
            _ => {}
        }
        match (scope == Scope::Tab, self.tab_id.is_some()) {
            (true, false) => return Err(ParseError::SchemaViolation(format!("{kind} requires tid"))),
            (false, true) => return Err(ParseError::SchemaViolation(format!("{kind} must not carry tid"))),
            _ => {}
        }
        if let EventKind::PageLoad { url, .. } = &self.kind {
            url.validate().map_err(ParseError::SchemaViolation)?;
        }
        Ok(())
    }

    /// Local wall-clock time in epoch milliseconds (`UTC - tz_offset`).
    pub fn local_time(&self) -> i64 {
        self.time - i64::from(self.tz_offset) * 60_000
    }
}

/// Sorts by time, keeping the relative order of equal-time records.
pub fn sort_by_time(events: &mut [EventRecord]) {
    events.sort_by_key(|e| e.time);
}
