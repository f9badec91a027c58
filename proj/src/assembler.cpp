#include "minipc/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <sstream>

#include "minipc/isa.hpp"

namespace minipc {

AsmErrors::AsmErrors(std::vector<AsmError> errors)
    : std::runtime_error([&] {
        std::ostringstream os;
        for (const auto& e : errors) os << "line " << e.line << ": " << e.message << "\n";
        return os.str();
      }()),
      errors_(std::move(errors)) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s.front())) return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

std::optional<unsigned> parse_register(std::string_view s) {
  if (s.size() == 2 && (s[0] == 'r' || s[0] == 'R') && s[1] >= '0' && s[1] <= '7') {
    return static_cast<unsigned>(s[1] - '0');
  }
  return std::nullopt;
}

std::optional<int64_t> parse_literal(std::string_view s) {
  s = trim(s);
  if (s.size() >= 3 && s.front() == '\'' && s.back() == '\'') {
    std::string_view body = s.substr(1, s.size() - 2);
    if (body.size() == 1) return static_cast<unsigned char>(body[0]);
    if (body == "\\n") return '\n';
    if (body == "\\r") return '\r';
    if (body == "\\t") return '\t';
    if (body == "\\0") return 0;
    if (body == "\\\\") return '\\';
    if (body == "\\'") return '\'';
    return std::nullopt;
  }
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size() || v > 0xFFFFFFFFull) return std::nullopt;
  return neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
}

// Splits on commas outside quotes and brackets.
std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  int depth = 0;
  for (char c : s) {
    if (c == '"') quoted = !quoted;
    if (!quoted && c == '[') ++depth;
    if (!quoted && c == ']') --depth;
    if (c == ',' && !quoted && depth == 0) {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.emplace_back(trim(cur));
  return out;
}

// Removes a trailing `;` comment, ignoring semicolons inside quotes.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  bool char_lit = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && !char_lit) quoted = !quoted;
    if (c == '\'' && !quoted) char_lit = !char_lit;
    if (c == ';' && !quoted && !char_lit) return line.substr(0, i);
  }
  return line;
}

struct Statement {
  int line = 0;
  std::string op;  // mnemonic or directive, lowercase
  std::vector<std::string> operands;
  uint32_t addr = 0;
  size_t section = 0;
};

struct Symbol {
  int64_t value = 0;
  bool is_label = false;
  int line = 0;
};

class Assembler {
 public:
  Image run(std::string_view source) {
    pass_one(source);
    Image image = pass_two();
    if (!errors_.empty()) {
      std::stable_sort(errors_.begin(), errors_.end(),
                       [](const AsmError& a, const AsmError& b) { return a.line < b.line; });
      throw AsmErrors(std::move(errors_));
    }
    return image;
  }

 private:
  void error(int line, std::string msg) { errors_.push_back({line, std::move(msg)}); }

  std::optional<int64_t> value_of(std::string_view tok, int line, bool* is_label = nullptr) {
    tok = trim(tok);
    if (auto lit = parse_literal(tok)) return lit;
    if (is_identifier(tok)) {
      auto it = symbols_.find(std::string(tok));
      if (it != symbols_.end()) {
        if (is_label) *is_label = it->second.is_label;
        return it->second.value;
      }
      error(line, "undefined label '" + std::string(tok) + "'");
      return std::nullopt;
    }
    error(line, "bad operand '" + std::string(tok) + "'");
    return std::nullopt;
  }

  void define(const std::string& name, int64_t value, bool is_label, int line) {
    if (parse_register(name)) {
      error(line, "'" + name + "' is a register name");
      return;
    }
    auto [it, inserted] = symbols_.try_emplace(name, Symbol{value, is_label, line});
    if (!inserted) {
      error(line, "duplicate label '" + name + "' (first defined at line " +
                      std::to_string(it->second.line) + ")");
    }
  }

  static uint32_t ascii_size(std::string_view text) {
    return (static_cast<uint32_t>(text.size()) + 3u) & ~3u;
  }

  std::optional<std::string> parse_string(std::string_view tok, int line) {
    tok = trim(tok);
    if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"') {
      error(line, ".ascii expects a quoted string");
      return std::nullopt;
    }
    std::string out;
    for (size_t i = 1; i + 1 < tok.size(); ++i) {
      char c = tok[i];
      if (c == '\\' && i + 2 < tok.size()) {
        const char n = tok[++i];
        c = n == 'n' ? '\n' : n == 't' ? '\t' : n == '0' ? '\0' : n == 'r' ? '\r' : n;
      }
      out.push_back(c);
    }
    return out;
  }

  void pass_one(std::string_view source) {
    uint32_t pc = 0;
    bool have_section = false;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= source.size()) {
      const size_t nl = source.find('\n', pos);
      std::string_view raw = source.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? source.size() + 1 : nl + 1;
      ++line_no;
      std::string_view text = trim(strip_comment(raw));

      // Leading labels.
      for (;;) {
        const size_t colon = text.find(':');
        if (colon == std::string_view::npos) break;
        std::string_view name = trim(text.substr(0, colon));
        if (!is_identifier(name)) break;
        if (!have_section) {
          sections_start_.push_back(pc);
          have_section = true;
        }
        define(std::string(name), pc, true, line_no);
        text = trim(text.substr(colon + 1));
      }
      if (text.empty()) continue;

      size_t sp = 0;
      while (sp < text.size() && !std::isspace(static_cast<unsigned char>(text[sp]))) ++sp;
      Statement st;
      st.line = line_no;
      st.op = lower(text.substr(0, sp));
      st.operands = split_operands(trim(text.substr(sp)));

      if (st.op == ".equ") {
        if (st.operands.size() != 2 || !is_identifier(st.operands[0])) {
          error(line_no, ".equ expects NAME, value");
        } else if (auto v = value_of(st.operands[1], line_no)) {
          define(st.operands[0], *v, false, line_no);
        }
        continue;
      }
      if (st.op == ".org") {
        if (st.operands.size() != 1) {
          error(line_no, ".org expects one address");
          continue;
        }
        auto v = value_of(st.operands[0], line_no);
        if (!v || *v < 0 || *v > 0xFFFFFFFFll) continue;
        pc = static_cast<uint32_t>(*v);
        sections_start_.push_back(pc);
        have_section = true;
        continue;
      }
      if (!have_section) {
        sections_start_.push_back(pc);
        have_section = true;
      }
      if (st.op != ".ascii" && (pc & 3u)) {
        error(line_no, "misaligned statement");
      }
      st.addr = pc;
      st.section = sections_start_.size() - 1;
      if (st.op == ".ascii") {
        if (st.operands.size() != 1) {
          error(line_no, ".ascii expects one string");
          continue;
        }
        auto s = parse_string(st.operands[0], line_no);
        if (!s) continue;
        pc += ascii_size(*s);
      } else {
        pc += 4;
      }
      statements_.push_back(std::move(st));
    }
  }

  std::optional<unsigned> reg(const Statement& st, size_t i) {
    if (i >= st.operands.size()) return std::nullopt;
    auto r = parse_register(st.operands[i]);
    if (!r) error(st.line, "expected register, got '" + st.operands[i] + "'");
    return r;
  }

  std::optional<int> imm_in(const Statement& st, int64_t v, int64_t lo, int64_t hi) {
    if (v < lo || v > hi) {
      error(st.line, "immediate " + std::to_string(v) + " out of range [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "]");
      return std::nullopt;
    }
    // Stored as the low 16 bits.
    return static_cast<int>(static_cast<int16_t>(static_cast<uint16_t>(v)));
  }

  std::optional<int> signed_imm(const Statement& st, size_t i) {
    auto v = value_of(st.operands.at(i), st.line);
    if (!v) return std::nullopt;
    return imm_in(st, *v, INT16_MIN, INT16_MAX);
  }

  std::optional<int> unsigned_imm(const Statement& st, size_t i) {
    auto v = value_of(st.operands.at(i), st.line);
    if (!v) return std::nullopt;
    return imm_in(st, *v, 0, 0xFFFF);
  }

  // `[rs]`, `[rs+imm]` or `[rs-imm]`.
  std::optional<std::pair<unsigned, int>> mem_operand(const Statement& st, size_t i) {
    std::string_view s = trim(st.operands.at(i));
    if (s.size() < 4 || s.front() != '[' || s.back() != ']') {
      error(st.line, "expected memory operand [rN+imm]");
      return std::nullopt;
    }
    s = trim(s.substr(1, s.size() - 2));
    const size_t sign = s.find_first_of("+-");
    auto base = parse_register(trim(s.substr(0, sign)));
    if (!base) {
      error(st.line, "bad base register in memory operand");
      return std::nullopt;
    }
    if (sign == std::string_view::npos) return std::pair{*base, 0};
    auto off = value_of(trim(s.substr(sign + 1)), st.line);
    if (!off) return std::nullopt;
    const int64_t v = s[sign] == '-' ? -*off : *off;
    auto imm = imm_in(st, v, INT16_MIN, INT16_MAX);
    if (!imm) return std::nullopt;
    return std::pair{*base, *imm};
  }

  bool expect_count(const Statement& st, size_t n, size_t n_alt = SIZE_MAX) {
    if (st.operands.size() == n || st.operands.size() == n_alt) return true;
    error(st.line, "'" + st.op + "' expects " + std::to_string(n) + " operand(s)");
    return false;
  }

  std::optional<uint32_t> encode_statement(const Statement& st) {
    auto op = opcode_from_mnemonic(st.op);
    if (!op) {
      error(st.line, "bad mnemonic '" + st.op + "'");
      return std::nullopt;
    }
    auto enc = [&](unsigned rd, unsigned rs, int imm) -> std::optional<uint32_t> {
      return encode(*op, rd, rs, imm);
    };
    switch (*op) {
      case Opcode::Nop: case Opcode::Halt: case Opcode::Ret: case Opcode::Iret:
      case Opcode::Brk: case Opcode::Sti: case Opcode::Cli: case Opcode::Idle:
        if (!expect_count(st, 0)) return std::nullopt;
        return enc(0, 0, 0);
      case Opcode::Movi: {
        if (!expect_count(st, 2)) return std::nullopt;
        auto rd = reg(st, 0);
        auto imm = signed_imm(st, 1);
        if (!rd || !imm) return std::nullopt;
        return enc(*rd, 0, *imm);
      }
      case Opcode::Mov: case Opcode::Add: case Opcode::Sub: case Opcode::And:
      case Opcode::Or: case Opcode::Xor: case Opcode::Shl: case Opcode::Shr:
      case Opcode::Cmp: {
        if (!expect_count(st, 2)) return std::nullopt;
        auto rd = reg(st, 0);
        auto rs = reg(st, 1);
        if (!rd || !rs) return std::nullopt;
        return enc(*rd, *rs, 0);
      }
      case Opcode::Jmp: case Opcode::Jz: case Opcode::Jnz: case Opcode::Jlt: {
        if (!expect_count(st, 1)) return std::nullopt;
        bool is_label = false;
        auto v = value_of(st.operands[0], st.line, &is_label);
        if (!v) return std::nullopt;
        int64_t imm = *v;
        if (is_label) {
          const int64_t delta = *v - (int64_t{st.addr} + 4);
          if (delta % 4 != 0) {
            error(st.line, "branch target is not word aligned");
            return std::nullopt;
          }
          imm = delta / 4;
        }
        auto i = imm_in(st, imm, INT16_MIN, INT16_MAX);
        if (!i) return std::nullopt;
        return enc(0, 0, *i);
      }
      case Opcode::Call: {
        if (!expect_count(st, 1)) return std::nullopt;
        bool is_label = false;
        auto v = value_of(st.operands[0], st.line, &is_label);
        if (!v) return std::nullopt;
        int64_t imm = *v;
        if (is_label) {
          if (*v % 4 != 0) {
            error(st.line, "call target is not word aligned");
            return std::nullopt;
          }
          imm = *v / 4;
        }
        auto i = imm_in(st, imm, 0, 0xFFFF);
        if (!i) return std::nullopt;
        return enc(0, 0, *i);
      }
      case Opcode::Load: case Opcode::Store: {
        if (!expect_count(st, 2)) return std::nullopt;
        auto rd = reg(st, 0);
        auto m = mem_operand(st, 1);
        if (!rd || !m) return std::nullopt;
        return enc(*rd, m->first, m->second);
      }
      case Opcode::Push: case Opcode::Pop: case Opcode::Livt: {
        if (!expect_count(st, 1)) return std::nullopt;
        auto rd = reg(st, 0);
        if (!rd) return std::nullopt;
        return enc(*rd, 0, 0);
      }
      case Opcode::In: {
        if (!expect_count(st, 2)) return std::nullopt;
        auto rd = reg(st, 0);
        auto p = unsigned_imm(st, 1);
        if (!rd || !p) return std::nullopt;
        return enc(*rd, 0, *p);
      }
      case Opcode::Out: {
        if (!expect_count(st, 2)) return std::nullopt;
        auto p = unsigned_imm(st, 0);
        auto rd = reg(st, 1);
        if (!rd || !p) return std::nullopt;
        return enc(*rd, 0, *p);
      }
      case Opcode::Syscall: case Opcode::Settf: {
        if (!expect_count(st, 1)) return std::nullopt;
        auto imm = signed_imm(st, 0);
        if (!imm) return std::nullopt;
        if (*op == Opcode::Settf && (*imm < 0 || *imm > 1)) {
          error(st.line, "settf expects 0 or 1");
          return std::nullopt;
        }
        return enc(0, 0, *imm);
      }
      case Opcode::Lptbr: {
        if (!expect_count(st, 1, 2)) return std::nullopt;
        auto rd = reg(st, 0);
        if (!rd) return std::nullopt;
        int sel = 0;
        if (st.operands.size() == 2) {
          auto v = value_of(st.operands[1], st.line);
          if (!v) return std::nullopt;
          auto s = imm_in(st, *v, 0, 3);
          if (!s) return std::nullopt;
          sel = *s;
        }
        return enc(*rd, 0, sel);
      }
    }
    error(st.line, "bad mnemonic '" + st.op + "'");
    return std::nullopt;
  }

  Image pass_two() {
    Image image;
    std::vector<Section> sections(sections_start_.size());
    for (size_t i = 0; i < sections.size(); ++i) sections[i].load_paddr = sections_start_[i];

    for (const auto& st : statements_) {
      auto& sec = sections[st.section];
      std::vector<uint8_t> bytes;
      if (st.op == ".ascii") {
        if (auto s = parse_string(st.operands[0], st.line)) {
          bytes.assign(s->begin(), s->end());
          bytes.resize(ascii_size(*s), 0);
        }
      } else {
        std::optional<uint32_t> word;
        if (st.op == ".word") {
          if (expect_count(st, 1)) {
            auto v = value_of(st.operands[0], st.line);
            if (v && (*v < INT32_MIN || *v > 0xFFFFFFFFll)) {
              error(st.line, ".word value out of range");
            } else if (v) {
              word = static_cast<uint32_t>(*v);
            }
          }
        } else if (!st.op.empty() && st.op.front() == '.') {
          error(st.line, "unknown directive '" + st.op + "'");
        } else {
          word = encode_statement(st);
        }
        const uint32_t w = word.value_or(0);
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(w >> (8 * i)));
      }
      // Statements within a section are contiguous by construction.
      sec.bytes.insert(sec.bytes.end(), bytes.begin(), bytes.end());
    }
    for (auto& s : sections) {
      if (!s.bytes.empty()) image.sections.push_back(std::move(s));
    }
    if (!sections_disjoint(image)) error(0, "sections overlap");

    auto start = symbols_.find("start");
    if (start != symbols_.end() && start->second.is_label) {
      image.entry = static_cast<uint32_t>(start->second.value);
    } else if (!image.sections.empty()) {
      image.entry = image.sections.front().load_paddr;
    }
    return image;
  }

  std::map<std::string, Symbol> symbols_;
  std::vector<Statement> statements_;
  std::vector<uint32_t> sections_start_;
  std::vector<AsmError> errors_;
};

}  // namespace

Image assemble(std::string_view source) { return Assembler{}.run(source); }

}  // namespace minipc
