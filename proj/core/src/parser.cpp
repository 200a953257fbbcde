#include "tracewam/ast.hpp"

#include <cctype>
#include <cstring>
#include <sstream>
#include <utility>

namespace tracewam::ast {

TermPtr mk_var(std::string name) {
  return std::make_shared<Term>(Term{Kind::Var, std::move(name), 0, {}});
}
TermPtr mk_atom(std::string name) {
  return std::make_shared<Term>(Term{Kind::Atom, std::move(name), 0, {}});
}
TermPtr mk_int(int64_t v) { return std::make_shared<Term>(Term{Kind::Int, "", v, {}}); }
TermPtr mk_struct(std::string functor, std::vector<TermPtr> args) {
  return std::make_shared<Term>(Term{Kind::Struct, std::move(functor), 0, std::move(args)});
}
TermPtr mk_list(TermPtr head, TermPtr tail) {
  return std::make_shared<Term>(Term{Kind::List, "", 0, {std::move(head), std::move(tail)}});
}
TermPtr mk_nil() { return std::make_shared<Term>(Term{Kind::Nil, "", 0, {}}); }

std::string to_string(const TermPtr& t) {
  std::ostringstream out;
  switch (t->kind) {
    case Kind::Var:
      out << t->name;
      break;
    case Kind::Atom:
      out << t->name;
      break;
    case Kind::Int:
      out << t->value;
      break;
    case Kind::Nil:
      out << "[]";
      break;
    case Kind::List: {
      out << "[" << to_string(t->args[0]);
      TermPtr cur = t->args[1];
      while (cur->kind == Kind::List) {
        out << "," << to_string(cur->args[0]);
        cur = cur->args[1];
      }
      if (cur->kind != Kind::Nil) out << "|" << to_string(cur);
      out << "]";
      break;
    }
    case Kind::Struct:
      out << t->name << "(";
      for (size_t i = 0; i < t->args.size(); ++i) {
        if (i) out << ",";
        out << to_string(t->args[i]);
      }
      out << ")";
      break;
  }
  return out.str();
}

namespace {

enum class Tok { Atom, Var, Int, Punct, End, Eof };

struct Token {
  Tok kind;
  std::string text;
  int64_t value = 0;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError{msg, line_, col_}; }

  char cur() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  char at(size_t off) const { return pos_ + off < text_.size() ? text_[pos_ + off] : '\0'; }

  void bump() {
    if (cur() == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_layout() {
    for (;;) {
      while (std::isspace(static_cast<unsigned char>(cur()))) bump();
      if (cur() == '%') {
        while (cur() != '\0' && cur() != '\n') bump();
        continue;
      }
      if (cur() == '/' && at(1) == '*') {
        bump();
        bump();
        while (cur() != '\0' && !(cur() == '*' && at(1) == '/')) bump();
        if (cur() == '\0') fail("unterminated block comment");
        bump();
        bump();
        continue;
      }
      break;
    }
  }

  void advance() {
    skip_layout();
    tok_.line = line_;
    tok_.col = col_;
    char c = cur();
    if (c == '\0') {
      tok_ = {Tok::Eof, "", 0, line_, col_};
      return;
    }
    if (c == '.' && (std::isspace(static_cast<unsigned char>(at(1))) || at(1) == '\0' ||
                     at(1) == '%')) {
      bump();
      tok_ = {Tok::End, ".", 0, line_, col_};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      int64_t v = 0;
      while (std::isdigit(static_cast<unsigned char>(cur()))) {
        v = v * 10 + (cur() - '0');
        bump();
      }
      tok_ = {Tok::Int, "", v, line_, col_};
      return;
    }
    if (std::islower(static_cast<unsigned char>(c))) {
      std::string s;
      while (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_') {
        s += cur();
        bump();
      }
      tok_ = {Tok::Atom, s, 0, line_, col_};
      return;
    }
    if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
      std::string s;
      while (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_') {
        s += cur();
        bump();
      }
      tok_ = {Tok::Var, s, 0, line_, col_};
      return;
    }
    if (c == '\'') {
      bump();
      std::string s;
      while (cur() != '\'' && cur() != '\0') {
        s += cur();
        bump();
      }
      if (cur() == '\0') fail("unterminated quoted atom");
      bump();
      tok_ = {Tok::Atom, s, 0, line_, col_};
      return;
    }
    // multi-char operators, longest first
    static const char* ops[] = {":-", "?-", "=<", ">=", "=:=", "=\\=", "//", "->"};
    for (const char* op : ops) {
      size_t n = std::strlen(op);
      if (text_.substr(pos_, n) == op) {
        for (size_t i = 0; i < n; ++i) bump();
        tok_ = {Tok::Punct, op, 0, line_, col_};
        return;
      }
    }
    static const std::string singles = "()[],|!<>=+-*.";
    if (singles.find(c) != std::string::npos) {
      bump();
      tok_ = {Tok::Punct, std::string(1, c), 0, line_, col_};
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) {}

  ParsedProgram program() {
    ParsedProgram out;
    while (lex_.peek().kind != Tok::Eof) {
      if (lex_.peek().kind == Tok::Punct && lex_.peek().text == ":-") {
        lex_.take();
        TermPtr g = expr(1199);
        expect_end();
        if (g->kind == Kind::Struct && g->name == "initialization" && g->args.size() == 1) {
          out.initialization = g->args[0];
        } else {
          fail("unsupported directive " + to_string(g));
        }
        continue;
      }
      TermPtr t = expr(1200);
      expect_end();
      out.clauses.push_back(to_clause(t));
    }
    return out;
  }

  std::vector<TermPtr> goal() {
    TermPtr t = expr(1199);
    if (lex_.peek().kind == Tok::End) lex_.take();
    if (lex_.peek().kind != Tok::Eof) fail("trailing input after goal");
    return flatten_conj(t);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError{msg, lex_.peek().line, lex_.peek().col};
  }

  void expect_end() {
    if (lex_.peek().kind != Tok::End) fail("expected '.' at end of clause");
    lex_.take();
  }

  void expect_punct(const std::string& p) {
    if (lex_.peek().kind != Tok::Punct || lex_.peek().text != p) fail("expected '" + p + "'");
    lex_.take();
  }

  static std::vector<TermPtr> flatten_conj(const TermPtr& t) {
    if (t->kind == Kind::Struct && t->name == "," && t->args.size() == 2) {
      std::vector<TermPtr> left = flatten_conj(t->args[0]);
      std::vector<TermPtr> right = flatten_conj(t->args[1]);
      left.insert(left.end(), right.begin(), right.end());
      return left;
    }
    return {t};
  }

  SourceClause to_clause(const TermPtr& t) {
    if (t->kind == Kind::Struct && t->name == ":-" && t->args.size() == 2) {
      check_callable(t->args[0]);
      return {t->args[0], flatten_conj(t->args[1])};
    }
    check_callable(t);
    return {t, {}};
  }

  void check_callable(const TermPtr& t) {
    if (t->kind != Kind::Atom && t->kind != Kind::Struct)
      fail("clause head must be an atom or compound: " + to_string(t));
  }

  // operator precedence climbing; returns left operand parsed at most maxp
  TermPtr expr(int maxp) {
    TermPtr left = primary(maxp);
    for (;;) {
      const Token& t = lex_.peek();
      if (t.kind == Tok::Punct || t.kind == Tok::Atom) {
        int prec = 0;
        bool right_assoc = false;
        std::string op = t.text;  // copy: t points into the lexer and dies on take()
        if (op == ":-") prec = 1200, right_assoc = false;
        else if (op == ",") prec = 1000, right_assoc = true;
        else if (op == "<" || op == ">" || op == "=<" || op == ">=" || op == "=:=" ||
                 op == "=\\=" || op == "is" || op == "=")
          prec = 700;
        else if (op == "+" || op == "-") prec = 500;
        else if (op == "*" || op == "//" || op == "mod") prec = 400;
        if (prec == 0 || prec > maxp) return left;
        lex_.take();
        int sub = right_assoc ? prec : prec - 1;
        TermPtr right = expr(sub);
        left = mk_struct(op, {left, right});
        continue;
      }
      return left;
    }
  }

  TermPtr primary(int maxp) {
    Token t = lex_.take();
    switch (t.kind) {
      case Tok::Int:
        return mk_int(t.value);
      case Tok::Var:
        return mk_var(t.text == "_" ? fresh_underscore() : t.text);
      case Tok::Atom: {
        if (lex_.peek().kind == Tok::Punct && lex_.peek().text == "(") {
          lex_.take();
          std::vector<TermPtr> args;
          args.push_back(expr(999));
          while (lex_.peek().kind == Tok::Punct && lex_.peek().text == ",") {
            lex_.take();
            args.push_back(expr(999));
          }
          expect_punct(")");
          return mk_struct(t.text, std::move(args));
        }
        return mk_atom(t.text);
      }
      case Tok::Punct: {
        if (t.text == "(") {
          TermPtr inner = expr(1200);
          expect_punct(")");
          return inner;
        }
        if (t.text == "[") return list_tail();
        if (t.text == "!") return mk_atom("!");
        if (t.text == "-") {
          // unary minus: negative literal or 0-Expr
          if (lex_.peek().kind == Tok::Int) return mk_int(-lex_.take().value);
          return mk_struct("-", {mk_int(0), primary(200)});
        }
        throw ParseError{"unexpected token '" + t.text + "'", t.line, t.col};
      }
      default:
        throw ParseError{"unexpected end of input", t.line, t.col};
    }
  }

  TermPtr list_tail() {
    if (lex_.peek().kind == Tok::Punct && lex_.peek().text == "]") {
      lex_.take();
      return mk_nil();
    }
    std::vector<TermPtr> items;
    items.push_back(expr(999));
    while (lex_.peek().kind == Tok::Punct && lex_.peek().text == ",") {
      lex_.take();
      items.push_back(expr(999));
    }
    TermPtr tail = mk_nil();
    if (lex_.peek().kind == Tok::Punct && lex_.peek().text == "|") {
      lex_.take();
      tail = expr(999);
    }
    expect_punct("]");
    for (auto it = items.rbegin(); it != items.rend(); ++it) tail = mk_list(*it, tail);
    return tail;
  }

  std::string fresh_underscore() { return "_G" + std::to_string(underscore_count_++); }

  Lexer lex_;
  int underscore_count_ = 0;
};

}  // namespace

ParsedProgram parse_program(std::string_view text) { return Parser(text).program(); }

std::vector<TermPtr> parse_goal(std::string_view text) { return Parser(text).goal(); }

}  // namespace tracewam::ast
