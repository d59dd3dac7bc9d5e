import pytest

# A run small enough for end-to-end tests: 16x16 two-class images, four epochs.
TINY_INI = """
[run]
seed = 3
name = tiny

[synthetic]
classes = 2
size = 16
shortcut_pairs = 3:5, 5:-3
samples_per_class = 40
shortcut_amplitude = 0.15
val_per_class = 6
test_per_class = 10
shortcut_margin = 0
broadband_margin = 0

[train]
epochs = 4
learning_rate = 0.03
batch_size = 16

[dfm]
eval_subset_size = 10

[dfmx]
x_percent = 50

[corruption]
kinds = gaussian_noise, impulse_noise, contrast
severities = 3, 5

[attack]
eps_255 = 2, 8
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return path


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
