/** Post-session survey form.
 *
 * Ten agreement statements on a 1-5 scale, the Success question, and
 * one conditional follow-up: perceived effort when successful,
 * free-text problems when not. Client-side validation mirrors the
 * server's rules; a server 409 (no interaction yet) is surfaced as-is.
 */

import { ApiError, type ApiClient } from "./api.js";
import {
  SURVEY_ITEM_FIELDS,
  SURVEY_STATEMENTS,
  type SurveyItemField,
  type SurveySubmission,
} from "./types.js";

const SCALE_LABELS = ["1 (disagree)", "2", "3", "4", "5 (agree)"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function scaleRow(name: string): HTMLElement {
  const row = el("div", "crs-survey-scale");
  SCALE_LABELS.forEach((label, index) => {
    const wrapper = el("label", "crs-survey-choice");
    const input = el("input");
    input.type = "radio";
    input.name = name;
    input.value = String(index + 1);
    wrapper.appendChild(input);
    wrapper.appendChild(document.createTextNode(label));
    row.appendChild(wrapper);
  });
  return row;
}

export interface SurveyFormResult {
  element: HTMLElement;
  /** Reads, validates, and posts the current form state. */
  submit: () => Promise<void>;
}

export function buildSurveyForm(
  api: ApiClient,
  sessionId: string,
  onDone: () => void,
): SurveyFormResult {
  const form = el("form", "crs-survey");
  form.setAttribute("data-testid", "survey-form");

  for (const field of SURVEY_ITEM_FIELDS) {
    const block = el("fieldset", "crs-survey-item");
    block.setAttribute("data-field", field);
    block.appendChild(el("legend", "crs-survey-statement", SURVEY_STATEMENTS[field]));
    block.appendChild(scaleRow(field));
    form.appendChild(block);
  }

  const successBlock = el("fieldset", "crs-survey-item");
  successBlock.setAttribute("data-field", "success");
  successBlock.appendChild(
    el("legend", "crs-survey-statement", "Was your request successfully fulfilled?"),
  );
  for (const [value, label] of [
    ["yes", "Yes"],
    ["no", "No"],
  ] as const) {
    const wrapper = el("label", "crs-survey-choice");
    const input = el("input");
    input.type = "radio";
    input.name = "success";
    input.value = value;
    wrapper.appendChild(input);
    wrapper.appendChild(document.createTextNode(label));
    successBlock.appendChild(wrapper);
  }
  form.appendChild(successBlock);

  const effortBlock = el("fieldset", "crs-survey-item crs-survey-conditional");
  effortBlock.setAttribute("data-field", "perceived_effort");
  effortBlock.appendChild(
    el("legend", "crs-survey-statement", "Finding something took me little effort."),
  );
  effortBlock.appendChild(scaleRow("perceived_effort"));
  effortBlock.hidden = true;
  form.appendChild(effortBlock);

  const problemsBlock = el("fieldset", "crs-survey-item crs-survey-conditional");
  problemsBlock.setAttribute("data-field", "general_problems");
  problemsBlock.appendChild(
    el("legend", "crs-survey-statement", "What problems did you experience?"),
  );
  const problemsInput = el("textarea");
  problemsInput.name = "general_problems";
  problemsBlock.appendChild(problemsInput);
  problemsBlock.hidden = true;
  form.appendChild(problemsBlock);

  form.addEventListener("change", () => {
    const success = readRadio(form, "success");
    effortBlock.hidden = success !== "yes";
    problemsBlock.hidden = success !== "no";
  });

  const errorLine = el("p", "crs-survey-error");
  errorLine.setAttribute("data-testid", "survey-error");
  form.appendChild(errorLine);

  const submitButton = el("button", "crs-survey-submit", "Submit");
  submitButton.type = "submit";
  form.appendChild(submitButton);

  function readRadio(root: HTMLElement, name: string): string | null {
    const checked = root.querySelector<HTMLInputElement>(`input[name="${name}"]:checked`);
    return checked ? checked.value : null;
  }

  function clearHighlights(): void {
    form
      .querySelectorAll(".crs-survey-item--missing")
      .forEach((node) => node.classList.remove("crs-survey-item--missing"));
    errorLine.textContent = "";
  }

  function highlight(field: string, message: string): void {
    const block = form.querySelector(`[data-field="${field}"]`);
    block?.classList.add("crs-survey-item--missing");
    errorLine.textContent = message;
  }

  async function submit(): Promise<void> {
    clearHighlights();
    const values: Partial<Record<SurveyItemField, number>> = {};
    for (const field of SURVEY_ITEM_FIELDS) {
      const raw = readRadio(form, field);
      if (raw === null) {
        highlight(field, "Please answer every statement.");
        return;
      }
      values[field] = Number(raw);
    }
    const successRaw = readRadio(form, "success");
    if (successRaw === null) {
      highlight("success", "Please answer the success question.");
      return;
    }
    const success = successRaw === "yes";
    const submission: SurveySubmission = {
      ...(values as Record<SurveyItemField, number>),
      success,
    };
    if (success) {
      const effort = readRadio(form, "perceived_effort");
      if (effort === null) {
        highlight("perceived_effort", "Please rate the effort.");
        return;
      }
      submission.perceived_effort = Number(effort);
    } else {
      const problems = problemsInput.value.trim();
      if (!problems) {
        highlight("general_problems", "Please describe the problems you experienced.");
        return;
      }
      submission.general_problems = problems;
    }
    try {
      await api.postSurvey(sessionId, submission);
      onDone();
    } catch (error) {
      if (error instanceof ApiError) {
        errorLine.textContent =
          typeof error.detail === "string"
            ? error.detail
            : JSON.stringify(error.detail);
      } else {
        errorLine.textContent = "Could not submit the survey. Please try again.";
      }
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });

  return { element: form, submit };
}
