"""Prompt templates for task creation, code generation, validation and RAG.

``app`` names the target application and ``language`` its scripting
language; the sandbox uses "MiniCanvas" / "MiniCanvas script".
"""

from __future__ import annotations

from typing import Sequence

TASKGEN_SYSTEM = """\
You are an expert user for {app}.
Your goal is to generate as many tasks as possible that are helpful and represent common needs for {app} users.

The generated tasks should follow the following criteria:
1. Describe these tasks so that they can be coded into a script.
2. The tasks should not be already implemented in {app}.
3. The tasks should be minimally dependent on the content.

Generate the tasks in plain text. Each task takes one line. Do no generate any other information such as numbering."""

TOPDOWN_USER = """\
Give me {n} most useful tasks related to {subcategory} under the category of {category}, in {app}.

Examples of successful tasks in the previous rounds include:
{memory}"""

BOTTOMUP_USER = """\
Give me {n} most useful {app} tasks related to {api} whose description is:
{api_description}

Take inspiration from the following APIs and their descriptions by considering the possibility of using {api} with at least one of the following APIs.
It's okay to not use them as long as the tasks related to {api} are useful.

{top_nodes_info}

The generated tasks should follow the following guidelines:
- Make sure the tasks are reusable.
- The tasks should be logical and reasonable to use two or more APIs together.
- The generated task should not simply be a concatenation of two API nodes, i.e., do task A and do a separate task B that doesn't closely depend on task A.
- Prioritize the usefulness of the tasks over generating exactly {n} tasks—fewer, high-quality tasks are acceptable."""

CODEGEN_SYSTEM = """\
You are an assistant generating {language} code for {app}. You will be provided a query that attempts to perform an action in {app}. Return only the {language} code snippet without additional messages, formatting, or markdown.

Initialize a document to simulate this code. Generate the initialization code and task code separately in the following JSON format:
{{"init_code": INITIALIZATION_CODE, "code": CODE, "code_name": "[brief description]"}}

The code must follow these rules:
1. Do not use alert. Return messages for stdout.
2. If the task is not feasible, return {{"code": ""}}.
3. Start error messages with "Error: ".
4. Include necessary initialization for selecting objects.
5. Ensure reusability of task code.
6. Call the function you create to execute the task.
7. Keep the initial layout minimal for clear visual results.
8. Do not crash {app}."""

CODEGEN_FIRST_USER = "Task: {task}"

CODEGEN_FEEDBACK_USER = """\
Task: {task}

Code from the last round:
{code_last_round}

Execution error for code from last round:
{error_msg}

Visual evaluation for the outcome layout from code from the last round:
{validation_last_round}"""

NO_ERROR = "Not applicable because the code was successfully executed."
NOT_JUDGED = "Not applicable because code failed to run"

VALIDATOR_SYSTEM = """\
You will be given a task description, a piece of initialization code, a layout after running the initialization code, a piece of task code, and a layout after running the task code. The context for the task is {app}.

Your job is to judge whether the task was performed correctly or not, given the task description and the two layout figures.
The difference between the two layout figures should reflect the result of running the task code.

Sometimes, the failure reason can be that the initialization code does not generate necessary elements for the task code to run correctly, or the task code does not perform the task correctly.

The output should be in JSON format:
{{"valid": true/false, "reason": [brief reason for the judgment], "suggestion": [brief suggestion for improvement]}}
Ensure the output contains no additional messages, formatting, or markdown, so that it can be directly parsed by json.loads()."""

VALIDATOR_USER = """\
Task description: {task}

Initialization code: {init_code}

Task code: {code}

Execution output: {stdout}"""

VALIDATOR_REASK = "Your previous reply could not be parsed. Reply with only the JSON object with keys valid, reason, suggestion."

RAG_USER = """\
Here are verified {app} skills that solve related tasks:

{examples}

Using them as reference, write code for the following task. Reuse or combine the examples where they fit.
Task: {task}"""

RAG_EXAMPLE = """\
Example {i}: {description}
Code:
{code}"""


def format_memory(descriptions: Sequence[str]) -> str:
    if not descriptions:
        return "(none yet)"
    return "\n".join(descriptions)


def format_partners(partners: Sequence[tuple[str, str]]) -> str:
    return "\n".join(f"- {name}: {desc}" for name, desc in partners)


def format_examples(examples: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(RAG_EXAMPLE.format(i=i, description=d, code=c) for i, (d, c) in enumerate(examples, 1))
