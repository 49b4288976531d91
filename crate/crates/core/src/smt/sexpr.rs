//! Just enough s-expression reading to consume solver replies.

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

impl Sexpr {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexpr::Atom(s) => Some(s),
            Sexpr::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::Atom(_) => None,
            Sexpr::List(items) => Some(items),
        }
    }
}

/// Parses a sequence of s-expressions; fails on unbalanced input.
pub fn parse_all(input: &str) -> Result<Vec<Sexpr>, String> {
    let mut stack: Vec<Vec<Sexpr>> = vec![Vec::new()];
    let mut chars = input.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().ok_or("unbalanced ')'")?;
                match stack.last_mut() {
                    Some(parent) => parent.push(Sexpr::List(done)),
                    None => return Err("unbalanced ')'".to_string()),
                }
            }
            '"' => {
                // String literal; quotes are escaped by doubling.
                let start = i;
                let mut text = String::from("\"");
                loop {
                    match chars.next() {
                        Some((_, '"')) => {
                            if chars.peek().map(|(_, c)| *c) == Some('"') {
                                chars.next();
                                text.push('"');
                            } else {
                                text.push('"');
                                break;
                            }
                        }
                        Some((_, c)) => text.push(c),
                        None => return Err(format!("unterminated string at byte {start}")),
                    }
                }
                stack.last_mut().unwrap().push(Sexpr::Atom(text));
            }
            c if c.is_whitespace() => {}
            _ => {
                let mut atom = String::new();
                atom.push(c);
                while let Some((_, c)) = chars.peek() {
                    if c.is_whitespace() || *c == '(' || *c == ')' {
                        break;
                    }
                    atom.push(*c);
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexpr::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced '('".to_string());
    }
    Ok(stack.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_lists() {
        let got = parse_all("sat ((v0 5) (v1 (- 3)))").unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], Sexpr::Atom("sat".into()));
        let pairs = got[1].as_list().unwrap();
        assert_eq!(pairs[0].as_list().unwrap()[0].as_atom(), Some("v0"));
        assert_eq!(
            pairs[1].as_list().unwrap()[1],
            Sexpr::List(vec![Sexpr::Atom("-".into()), Sexpr::Atom("3".into())])
        );
    }

    #[test]
    fn rejects_unbalanced_input() {
        assert!(parse_all("(a (b)").is_err());
        assert!(parse_all("a))").is_err());
    }

    #[test]
    fn keeps_strings_whole() {
        let got = parse_all("(error \"line 1: op\")").unwrap();
        assert_eq!(
            got[0].as_list().unwrap()[1].as_atom(),
            Some("\"line 1: op\"")
        );
    }
}
