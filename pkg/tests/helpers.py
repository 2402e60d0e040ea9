from __future__ import annotations

import random

from perfprompt.cpg import SourceUnit
from perfprompt.roi_store import CodePair, RoiDatabase, RoiInstruction, RoiPoint, RoiTriplet

VOCAB = ("replace cin cout with scanf printf buffered io memoize recursion table vector static array "
         "hoist sort outside loop cache result precompute prefix sums avoid pow integer multiply "
         "reserve capacity bitset unordered_map hashing binary search two pointers").split()


def make_triplet(i: int, text: str, problem: str | None = None) -> RoiTriplet:
    pair = CodePair(f"t{i}", problem or f"p{i % 7}", SourceUnit(f"int main(){{ return {i}; }}\n"),
                    SourceUnit(f"int main(){{ return {i} + 0; }}\n"))
    return RoiTriplet(pair, RoiInstruction(text, (RoiPoint(text, 5, "Other"),)))


def random_db(rng: random.Random, n: int = 50) -> RoiDatabase:
    texts = []
    for _ in range(n):
        if texts and rng.random() < 0.2:
            texts.append(rng.choice(texts))  # duplicates force exact score ties
        else:
            texts.append(" ".join(rng.choices(VOCAB, k=rng.randint(3, 12))))
    return RoiDatabase([make_triplet(i, t) for i, t in enumerate(texts)])


def example_triplets() -> list[RoiTriplet]:
    """The two retrieved examples behind the prompt golden files."""
    def triplet(pid: str, slow: str, fast: str, instruction: str) -> RoiTriplet:
        pair = CodePair(pid, pid, SourceUnit(slow), SourceUnit(fast))
        return RoiTriplet(pair, RoiInstruction(instruction, (RoiPoint(instruction, 7, "Algorithm"),)))

    return [
        triplet("a", "int f(int n){ return n < 2 ? n : f(n-1) + f(n-2); }\n",
                "int m[90]; int f(int n){ return n < 2 ? n : m[n] ? m[n] : m[n] = f(n-1) + f(n-2); }\n",
                "Cache each f(n) in a table so every value is computed once."),
        triplet("b", "int n; cin >> n;\n", "int n; scanf(\"%d\", &n);\n", "Read input with scanf instead of cin."),
    ]
