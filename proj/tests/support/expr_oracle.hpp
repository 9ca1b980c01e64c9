#pragma once

// Independent model of IAML value expressions: an explicit tree evaluated
// with exact integers reduced mod 2^16 after each step.

#include <cstdint>
#include <memory>
#include <random>
#include <string>

namespace oracle {

struct Node {
  char op = 0;  // 0 literal, 'X', or + - * /
  std::uint32_t value = 0;
  std::unique_ptr<Node> l, r;
};

struct DivZero {};

inline std::unique_ptr<Node> random_tree(std::mt19937& rng, int depth) {
  auto n = std::make_unique<Node>();
  if (depth == 0 || rng() % 3 == 0) {
    if (rng() % 2) {
      n->op = 'X';
    } else {
      const std::uint32_t choices[] = {0, 1, 2, 3, 7, 100, 2318, 11391, 65280, 65535};
      n->value = rng() % 2 ? choices[rng() % 10] : rng() % 65536;
    }
    return n;
  }
  n->op = "+-*/"[rng() % 4];
  n->l = random_tree(rng, depth - 1);
  n->r = random_tree(rng, depth - 1);
  return n;
}

/// Fully parenthesized text with random spacing and case of X.
inline std::string render(const Node& n, std::mt19937& rng) {
  const std::string sp = rng() % 4 == 0 ? " " : "";
  if (n.op == 0) return std::to_string(n.value);
  if (n.op == 'X') return rng() % 8 ? "X" : "x";
  return "(" + sp + render(*n.l, rng) + sp + n.op + sp + render(*n.r, rng) + sp + ")";
}

inline bool has_x(const Node& n) { return n.op == 'X' || (n.l && (has_x(*n.l) || has_x(*n.r))); }

inline std::uint32_t eval(const Node& n, std::uint32_t x) {
  switch (n.op) {
    case 0: return n.value;
    case 'X': return x;
  }
  const std::uint32_t a = eval(*n.l, x), b = eval(*n.r, x);
  switch (n.op) {
    case '+': return (a + b) % 65536;
    case '-': return (a + 65536 - b) % 65536;
    case '*': return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) % 65536);
    default:
      if (b == 0) throw DivZero{};
      return a / b;
  }
}

/// True if some division has an X-free divisor that is zero.
inline bool static_div_zero(const Node& n) {
  if (!n.l) return false;
  if (static_div_zero(*n.l) || static_div_zero(*n.r)) return true;
  if (n.op != '/' || has_x(*n.r)) return false;
  try {
    return eval(*n.r, 0) == 0;
  } catch (const DivZero&) {
    return true;
  }
}

}  // namespace oracle
