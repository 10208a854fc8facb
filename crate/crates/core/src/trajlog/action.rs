//! Browser-agent action grammar.
//!
//! Actions are flat command strings such as `click [1234]`,
//! `type [55] [hello world] [1]` or `stop [N/A]`. Bracketed arguments may
//! contain spaces but never brackets; anything that does not match a
//! production is kept as [`Command::Invalid`] with its raw text.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Click,
    Type,
    Hover,
    Press,
    Scroll,
    NewTab,
    TabFocus,
    CloseTab,
    Goto,
    GoBack,
    GoForward,
    Stop,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScrollDirection {
    Up,
    Down,
}

impl ScrollDirection {
    fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
        }
    }
}

/// Structured form of an action. Each variant carries exactly the
/// arguments its production allows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Click {
        element_id: u64,
    },
    /// `press_enter` is the optional trailing `[0]`/`[1]` flag.
    Type {
        element_id: u64,
        text: String,
        press_enter: Option<String>,
    },
    Hover {
        element_id: u64,
    },
    Press {
        key: String,
    },
    Scroll {
        direction: ScrollDirection,
    },
    NewTab,
    TabFocus {
        tab: u64,
    },
    CloseTab,
    Goto {
        url: String,
    },
    GoBack,
    GoForward,
    Stop {
        answer: String,
    },
    Invalid,
}

/// A parsed agent action together with the text it came from.
///
/// Equality is structural: two non-invalid actions are equal when their
/// commands are, whatever spacing the raw strings used. Invalid actions
/// compare by raw text.
#[derive(Debug, Clone)]
pub struct Action {
    command: Command,
    raw: String,
}

impl PartialEq for Action {
    fn eq(&self, other: &Self) -> bool {
        match (&self.command, &other.command) {
            (Command::Invalid, Command::Invalid) => self.raw == other.raw,
            (a, b) => a == b,
        }
    }
}

impl Eq for Action {}

impl Action {
    /// Builds an action from a command; the raw text is the canonical rendering.
    ///
    /// `Command::Invalid` has no rendering, so use [`Action::invalid`] for it.
    pub fn new(command: Command) -> Self {
        let raw = render_command(&command);
        Self { command, raw }
    }

    pub fn invalid(raw: impl Into<String>) -> Self {
        Self { command: Command::Invalid, raw: raw.into() }
    }

    pub fn click(element_id: u64) -> Self {
        Self::new(Command::Click { element_id })
    }

    pub fn stop(answer: impl Into<String>) -> Self {
        Self::new(Command::Stop { answer: answer.into() })
    }

    pub fn command(&self) -> &Command {
        &self.command
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn kind(&self) -> ActionKind {
        match self.command {
            Command::Click { .. } => ActionKind::Click,
            Command::Type { .. } => ActionKind::Type,
            Command::Hover { .. } => ActionKind::Hover,
            Command::Press { .. } => ActionKind::Press,
            Command::Scroll { .. } => ActionKind::Scroll,
            Command::NewTab => ActionKind::NewTab,
            Command::TabFocus { .. } => ActionKind::TabFocus,
            Command::CloseTab => ActionKind::CloseTab,
            Command::Goto { .. } => ActionKind::Goto,
            Command::GoBack => ActionKind::GoBack,
            Command::GoForward => ActionKind::GoForward,
            Command::Stop { .. } => ActionKind::Stop,
            Command::Invalid => ActionKind::Invalid,
        }
    }

    pub fn is_invalid(&self) -> bool {
        matches!(self.command, Command::Invalid)
    }

    pub fn element_id(&self) -> Option<u64> {
        match self.command {
            Command::Click { element_id } | Command::Type { element_id, .. } | Command::Hover { element_id } => {
                Some(element_id)
            }
            Command::TabFocus { tab } => Some(tab),
            _ => None,
        }
    }

    pub fn text_arg(&self) -> Option<&str> {
        match &self.command {
            Command::Type { text, .. } => Some(text),
            Command::Goto { url } => Some(url),
            _ => None,
        }
    }

    pub fn key_arg(&self) -> Option<&str> {
        match &self.command {
            Command::Type { press_enter, .. } => press_enter.as_deref(),
            Command::Press { key } => Some(key),
            _ => None,
        }
    }

    pub fn direction(&self) -> Option<ScrollDirection> {
        match self.command {
            Command::Scroll { direction } => Some(direction),
            _ => None,
        }
    }

    /// The answer of a `stop` action.
    pub fn answer(&self) -> Option<&str> {
        match &self.command {
            Command::Stop { answer } => Some(answer),
            _ => None,
        }
    }

    /// Canonical text form. Invalid actions render as their raw text.
    pub fn render(&self) -> String {
        match self.command {
            Command::Invalid => self.raw.clone(),
            ref c => render_command(c),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn render_command(command: &Command) -> String {
    match command {
        Command::Click { element_id } => format!("click [{element_id}]"),
        Command::Type { element_id, text, press_enter: Some(flag) } => {
            format!("type [{element_id}] [{text}] [{flag}]")
        }
        Command::Type { element_id, text, press_enter: None } => {
            format!("type [{element_id}] [{text}]")
        }
        Command::Hover { element_id } => format!("hover [{element_id}]"),
        Command::Press { key } => format!("press [{key}]"),
        Command::Scroll { direction } => format!("scroll [{}]", direction.as_str()),
        Command::NewTab => "new_tab".to_string(),
        Command::TabFocus { tab } => format!("tab_focus [{tab}]"),
        Command::CloseTab => "close_tab".to_string(),
        Command::Goto { url } => format!("goto [{url}]"),
        Command::GoBack => "go_back".to_string(),
        Command::GoForward => "go_forward".to_string(),
        Command::Stop { answer } => format!("stop [{answer}]"),
        Command::Invalid => String::new(),
    }
}

/// Parses an action string. Never fails: unrecognised input yields an
/// invalid action that keeps `raw` verbatim.
pub fn parse_action(raw: &str) -> Action {
    match parse_command(raw.trim()) {
        Some(command) => Action { command, raw: raw.to_string() },
        None => Action::invalid(raw),
    }
}

fn parse_command(text: &str) -> Option<Command> {
    let name_end = text.find([' ', '[']).unwrap_or(text.len());
    let (name, rest) = text.split_at(name_end);
    let args = bracket_args(rest)?;
    let args: Vec<&str> = args.iter().map(String::as_str).collect();

    let command = match (name, args.as_slice()) {
        ("click", [id]) => Command::Click { element_id: parse_id(id)? },
        ("hover", [id]) => Command::Hover { element_id: parse_id(id)? },
        ("type", [id, text]) => {
            Command::Type { element_id: parse_id(id)?, text: (*text).to_string(), press_enter: None }
        }
        ("type", [id, text, flag]) if matches!(*flag, "0" | "1") => Command::Type {
            element_id: parse_id(id)?,
            text: (*text).to_string(),
            press_enter: Some((*flag).to_string()),
        },
        ("press", [key]) if !key.is_empty() => Command::Press { key: (*key).to_string() },
        ("scroll", [dir]) => {
            let dir = dir.strip_prefix("direction=").unwrap_or(dir);
            let direction = match dir {
                "up" => ScrollDirection::Up,
                "down" => ScrollDirection::Down,
                _ => return None,
            };
            Command::Scroll { direction }
        }
        ("new_tab", []) => Command::NewTab,
        ("tab_focus", [tab]) => Command::TabFocus { tab: parse_id(tab)? },
        ("close_tab", []) => Command::CloseTab,
        ("goto", [url]) if !url.is_empty() => Command::Goto { url: (*url).to_string() },
        ("go_back", []) => Command::GoBack,
        ("go_forward", []) => Command::GoForward,
        ("stop", [answer]) => Command::Stop { answer: (*answer).to_string() },
        _ => return None,
    };
    Some(command)
}

fn parse_id(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Splits `" [a] [b c]"` into `["a", "b c"]`. The first argument may follow
/// the command name directly (`stop[N/A]`); later ones need one space.
fn bracket_args(mut rest: &str) -> Option<Vec<String>> {
    let mut args = Vec::new();
    let mut first = true;
    while !rest.is_empty() {
        rest = match rest.strip_prefix(' ') {
            Some(r) => r,
            None if first => rest,
            None => return None,
        };
        let body = rest.strip_prefix('[')?;
        let close = body.find(']')?;
        let arg = &body[..close];
        if arg.contains('[') {
            return None;
        }
        args.push(arg.to_string());
        rest = &body[close + 1..];
        first = false;
    }
    Some(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click() {
        let a = parse_action("click [1234]");
        assert_eq!(a.kind(), ActionKind::Click);
        assert_eq!(a.element_id(), Some(1234));
        assert_eq!(a.text_arg(), None);
    }

    #[test]
    fn stop_na() {
        let a = parse_action("stop [N/A]");
        assert_eq!(a.kind(), ActionKind::Stop);
        assert_eq!(a.answer(), Some("N/A"));
        assert_eq!(a.element_id(), None);
    }

    #[test]
    fn stop_without_space_and_empty() {
        assert_eq!(parse_action("stop[N/A]"), Action::stop("N/A"));
        assert_eq!(parse_action("stop []").answer(), Some(""));
    }

    #[test]
    fn type_with_flag() {
        let a = parse_action("type [55] [hello world] [1]");
        assert_eq!(a.kind(), ActionKind::Type);
        assert_eq!(a.element_id(), Some(55));
        assert_eq!(a.text_arg(), Some("hello world"));
        assert_eq!(a.key_arg(), Some("1"));
    }

    #[test]
    fn misspelled_is_invalid() {
        let a = parse_action("clck 1234");
        assert_eq!(a.kind(), ActionKind::Invalid);
        assert_eq!(a.raw(), "clck 1234");
        assert_eq!(a.element_id(), None);
        assert_eq!(a.answer(), None);
    }

    #[test]
    fn other_productions() {
        assert_eq!(parse_action("scroll [direction=down]").direction(), Some(ScrollDirection::Down));
        assert_eq!(parse_action("scroll [up]").direction(), Some(ScrollDirection::Up));
        assert_eq!(parse_action("press [Meta+Enter]").key_arg(), Some("Meta+Enter"));
        assert_eq!(parse_action("goto [http://a.b/c d]").text_arg(), Some("http://a.b/c d"));
        assert_eq!(parse_action("tab_focus [2]").element_id(), Some(2));
        assert_eq!(parse_action("go_back").kind(), ActionKind::GoBack);
        assert_eq!(parse_action("new_tab").kind(), ActionKind::NewTab);
    }

    #[test]
    fn malformed_inputs() {
        for raw in [
            "",
            "click [abc]",
            "click [12",
            "click [1] [2]",
            "click  [1]",
            "stop [a [b]]",
            "type [1] [x] [yes]",
            "scroll [left]",
            "go_back [1]",
            "CLICK [1]",
        ] {
            assert!(parse_action(raw).is_invalid(), "{raw:?} should be invalid");
        }
    }

    #[test]
    fn equality_ignores_surrounding_whitespace() {
        assert_eq!(parse_action(" click [3] "), parse_action("click [3]"));
        assert_ne!(parse_action("nope"), parse_action("nope "));
    }
}
