from conftest import analyze_text
from upr_audit.dot import to_dot
from upr_audit.keys import VariableKey
from upr_audit.plots import plot_rating_histogram, plot_score_ranking
from upr_audit.scorer import UPRScore, rank
from upr_audit.slicer import extract_subgraph

SRC = 'int f(int uid){ int r = 0; if (uid == 0) { r = 1; } printf("a\\"b"); return r; }'


def test_dot_whole_function():
    fa = analyze_text(SRC)
    text = to_dot(fa.pdg)
    assert text.startswith('digraph "f" {') and text.rstrip().endswith("}")
    assert text.count(" -> ") == len(fa.pdg.edges)
    assert "style=dashed" in text and '\\"b' in text


def test_dot_subgraph_with_scores():
    fa = analyze_text(SRC)
    sg = extract_subgraph(fa.pdg, VariableKey("f", "uid"))
    text = to_dot(fa.pdg, sg, {n: 9 for n in sg.nodes})
    assert text.count("orange") == len(sg.criterion_nodes)
    assert text.count(" -> ") == len(sg.edges)
    assert "[9]" in text


def test_plots_write_png(tmp_path):
    plot_rating_histogram([5, 1, 0, 0, 0, 2, 0, 0, 0, 3, 1], tmp_path / "h.png", "ratings")
    report = rank([UPRScore(VariableKey("f", c), float(i), 0.5) for i, c in enumerate("abc")], 1.0)
    plot_score_ranking(report, tmp_path / "s.png")
    plot_score_ranking(rank([], 9.0), tmp_path / "empty.png")
    for name in ("h.png", "s.png", "empty.png"):
        assert (tmp_path / name).read_bytes()[:4] == b"\x89PNG"
