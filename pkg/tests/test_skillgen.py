import json
import sys

from hypothesis import given, settings
from hypothesis import strategies as st

from skillsim.embeddings import HashEmbedder
from skillsim.gateway import Gateway, GatewayError, GenerationPayload, ScriptedResponder
from skillsim.skillgen import (
    INFEASIBLE,
    ExecResult,
    Failure,
    Success,
    SubprocessExecutor,
    TrialRecord,
    build_feedback_prompt,
    first_success_attempt,
    generate_skill,
    lvlm_validate,
)
from skillsim.skillstore import Verdict
from skillsim.taskgen import TaskRecord, TopDown

TASK = TaskRecord("t1", "Arrange selected objects in a circle", TopDown("Layout", "Circles", 1))
PROVIDER = HashEmbedder(32)


def payload(code, init="init"):
    return json.dumps({"init_code": init, "code": code, "code_name": "n"})


class FakeExecutor:
    """Fails any code containing 'bad' with a fixed error."""

    def __init__(self):
        self.runs = []

    def run(self, init_code, task_code):
        self.runs.append((init_code, task_code))
        if "bad" in task_code:
            return ExecResult("", "Error: 21: undefined is not an object")
        return ExecResult("ok\n", None, "before", "after")


class FakeValidator:
    def __init__(self, verdicts):
        self.verdicts = list(verdicts)

    def judge(self, task, payload, exec):
        return self.verdicts.pop(0)


def run(replies, verdicts=(), max_trials=3):
    r = ScriptedResponder(replies)
    outcome = generate_skill(TASK, Gateway("mock", responder=r), FakeExecutor(), FakeValidator(verdicts),
                             max_trials, provider=PROVIDER)
    return outcome, r


def test_error_then_fix():
    outcome, r = run([payload("bad()"), payload("good()")], [Verdict(True, "fine", "")])
    assert isinstance(outcome, Success)
    assert outcome.skill.trials_used == 2
    assert outcome.trials[0].verdict is None
    assert "Error: 21: undefined is not an object" in r.captured[1].user
    assert "init\nbad()" in r.captured[1].user
    assert "Not applicable because code failed to run" in r.captured[1].user


def test_three_rejections():
    no = Verdict(False, "wrong place", "move it")
    outcome, r = run([payload("a()"), payload("b()"), payload("c()")], [no, no, no])
    assert isinstance(outcome, Failure)
    assert len(outcome.trials) == 3
    assert all(t.verdict is not None and not t.verdict.valid for t in outcome.trials)
    assert len(r.captured) == 3


def test_first_prompt_is_system_plus_task():
    _, r = run([payload("x()")], [Verdict(True, "", "")])
    req = r.captured[0]
    assert req.user == f"Task: {TASK.description}"
    assert "Start error messages with \"Error: \"" in req.system
    assert req.purpose == "codegen"


def test_infeasible_reply_is_a_failed_trial():
    outcome, r = run([payload(""), payload("x()")], [Verdict(True, "", "")])
    assert outcome.trials[0].verdict == Verdict(False, INFEASIBLE, "")
    assert outcome.skill.trials_used == 2
    assert INFEASIBLE in r.captured[1].user


def test_unparsable_reply_is_a_failed_trial():
    outcome, r = run(["I cannot do that", payload("x()")], [Verdict(True, "", "")])
    first = outcome.trials[0]
    assert first.payload is None and first.exec.error_msg.startswith("Error: unparsable")
    assert "I cannot do that" in r.captured[1].user


def test_gateway_failure_aborts_only_the_task():
    def responder(request):
        raise GatewayError("down")

    outcome = generate_skill(TASK, Gateway("mock", responder=responder), FakeExecutor(), FakeValidator([]),
                             provider=PROVIDER)
    assert isinstance(outcome, Failure) and "gateway failure" in outcome.reason


def test_skill_has_embedding_and_origin():
    outcome, _ = run([payload("x()")], [Verdict(True, "ok", "")])
    s = outcome.skill
    assert s.embedding.shape == (32,)
    assert s.origin == TASK.origin and s.code == "x()" and s.init_code == "init"


def test_feedback_prompt_error_case():
    prev = TrialRecord(1, GenerationPayload("i", "c", "n"), ExecResult("", "Error: 21"))
    user = build_feedback_prompt(TASK, prev)[1].content
    assert "Error: 21" in user
    assert "Not applicable because code failed to run" in user


def test_feedback_prompt_rejection_case():
    prev = TrialRecord(1, GenerationPayload("i", "c", "n"), ExecResult("out"),
                       Verdict(False, "objects overlap", "use alert(...)"))
    msgs = build_feedback_prompt(TASK, prev)
    user = msgs[1].content
    assert "Not applicable because the code was successfully executed." in user
    assert "use alert(...)" in user and "objects overlap" in user
    assert msgs[0].role == "system"


def test_trial_record_roundtrip():
    t = TrialRecord(2, GenerationPayload("i", "c", "n"), ExecResult("o", None, "b", "a"), Verdict(True, "r", "s"), "raw")
    assert TrialRecord.from_record(json.loads(json.dumps(t.to_record()))) == t


EXEC = ExecResult("", None, "scene before", "scene after")
PAY = GenerationPayload("i", "c", "n")


def test_validate_plain():
    r = ScriptedResponder(['{"valid": true, "reason": "r", "suggestion": "s"}'])
    assert lvlm_validate(Gateway("mock", responder=r), TASK, PAY, EXEC) == Verdict(True, "r", "s")
    assert r.captured[0].messages[-1].images == ("scene before", "scene after")


def test_validate_reask_once():
    r = ScriptedResponder(["Looks good to me!", '{"valid": false, "reason": "r", "suggestion": "s"}'])
    gw = Gateway("mock", responder=r)
    assert lvlm_validate(gw, TASK, PAY, EXEC) == Verdict(False, "r", "s")
    assert gw.ledger.totals(purpose="judge").requests == 2


def test_validate_gives_up():
    r = ScriptedResponder(["nope", '{"valid": "yes"}'])
    assert lvlm_validate(Gateway("mock", responder=r), TASK, PAY, EXEC) == Verdict(False, "unparsable judgment", "")


ADAPTER = """
import json, sys
init, task = (open(p).read() for p in sys.argv[1:3])
if "sleep" in task:
    import time; time.sleep(5)
err = "Error: boom" if "boom" in task else None
print(json.dumps({"stdout": init + "|" + task, "error": err, "before": "b", "after": "a"}))
"""


def test_subprocess_executor(tmp_path):
    script = tmp_path / "adapter.py"
    script.write_text(ADAPTER)
    ex = SubprocessExecutor([sys.executable, str(script), "{init}", "{task}"], timeout=2)
    ok = ex.run("I", "T")
    assert ok.stdout == "I|T" and ok.ok and ok.after_image == "a"
    assert ex.run("I", "boom").error_msg == "Error: boom"
    slow = SubprocessExecutor([sys.executable, str(script), "{init}", "{task}"], timeout=0.5)
    assert slow.run("I", "sleep").error_msg == "Error: execution timeout"


outcomes = st.lists(st.sampled_from(["bad", "reject", "accept", "infeasible", "prose"]), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(outcomes, st.integers(1, 4))
def test_loop_invariants(script, max_trials):
    replies, verdicts = [], []
    for kind in script:
        if kind == "bad":
            replies.append(payload("bad()"))
        elif kind == "infeasible":
            replies.append(payload(""))
        elif kind == "prose":
            replies.append("hmm")
        else:
            replies.append(payload(f"{kind}()"))
            verdicts.append(Verdict(kind == "accept", kind, ""))
    replies += [payload("reject()")] * max_trials
    verdicts += [Verdict(False, "reject", "")] * max_trials
    outcome, r = run(replies, verdicts, max_trials)
    trials = outcome.trials
    assert 1 <= len(trials) <= max_trials
    assert all(not t.valid for t in trials[:-1])
    assert isinstance(outcome, Success) == trials[-1].valid
    for t, req in zip(trials, r.captured[1:]):
        assert t.code_last_round() in req.user
    first = first_success_attempt(trials)
    assert first is None or first == len(trials)
