// Pure projection of API responses into a renderable form view.
// No business logic lives here: values, verdicts, and grouping arrive
// from the service and are only rearranged for display.

import type {
  AnswerEntry,
  AnswerPlaceSpec,
  IncidentDetail,
  SchemaField,
  VerdictEntry,
} from "./api.js";

export interface PlaceCell {
  key: string;
  placeName: string;
  answerType: AnswerPlaceSpec["answer_type"];
  entry: AnswerEntry | null;
  /** "CODE = label" for resolvable choice codes, otherwise the raw value. */
  display: string;
  unknown: boolean;
  verdict: VerdictEntry["verdict"] | null;
  answerable: boolean | null;
}

export interface FieldRow {
  fieldId: string;
  name: string;
  cells: PlaceCell[];
}

export interface GroupView {
  name: string;
  fields: FieldRow[];
}

export interface LinkageBanner {
  decision: string | null;
  recordId: string | null;
  dayOffset: number | null;
}

export interface FormView {
  articleId: string;
  hasForm: boolean;
  groups: GroupView[];
  linkage: LinkageBanner;
  unknownCount: number;
}

/** Field id is the entry-number prefix of the printed name ("6. Time" -> "6"). */
export function fieldIdOf(name: string): string {
  const dot = name.indexOf(".");
  return (dot < 0 ? name : name.slice(0, dot)).trim();
}

/** Answer keys flatten "field/place" with "/" inside place names mangled to "-". */
export function answerKey(fieldId: string, placeName: string): string {
  return `${fieldId}/${placeName.replace(/\//g, "-")}`;
}

function placesOf(field: SchemaField): Array<[string, AnswerPlaceSpec]> {
  if (field.answer_places) return Object.entries(field.answer_places);
  return [["value", { answer_type: field.answer_type ?? "text", choices: field.choices }]];
}

function displayFor(entry: AnswerEntry | null, spec: AnswerPlaceSpec): string {
  if (entry === null) return "(no answer)";
  if (entry.type === "unknown" || entry.value === null) return "Unknown";
  if (entry.type === "choice") {
    const label = spec.choices?.[entry.value];
    return label !== undefined && label !== entry.value
      ? `${entry.value} = ${label}`
      : entry.value;
  }
  return entry.value;
}

export function buildFormView(detail: IncidentDetail, fields: SchemaField[]): FormView {
  const byId = new Map(fields.map((f) => [fieldIdOf(f.name), f]));
  const verdicts = new Map(detail.verdicts.map((v) => [v.key, v]));
  const answerable = detail.answerable === null ? null : new Set(detail.answerable);

  const groupField = (fieldId: string): FieldRow | null => {
    const field = byId.get(fieldId);
    if (field === undefined) return null;
    const cells = placesOf(field).map(([placeName, spec]): PlaceCell => {
      const key = answerKey(fieldId, placeName);
      const entry = detail.form?.[key] ?? null;
      const verdict = verdicts.get(key);
      return {
        key,
        placeName,
        answerType: spec.answer_type,
        entry,
        display: displayFor(entry, spec),
        unknown: entry !== null && entry.type === "unknown",
        // badges only make sense against ground truth
        verdict: verdict !== undefined && verdict.has_ground_truth ? verdict.verdict : null,
        answerable: answerable === null ? null : answerable.has(key),
      };
    });
    return { fieldId, name: field.name, cells };
  };

  const groups: GroupView[] = [];
  const seen = new Set<string>();
  const grouping = detail.grouping_used ?? { "all fields": [...byId.keys()] };
  for (const [name, fieldIds] of Object.entries(grouping)) {
    const rows: FieldRow[] = [];
    for (const fieldId of fieldIds) {
      if (seen.has(fieldId)) continue;
      seen.add(fieldId);
      const row = groupField(fieldId);
      if (row !== null) rows.push(row);
    }
    groups.push({ name, fields: rows });
  }
  const leftovers = [...byId.keys()].filter((id) => !seen.has(id));
  if (leftovers.length > 0) {
    groups.push({
      name: "ungrouped",
      fields: leftovers.map(groupField).filter((row): row is FieldRow => row !== null),
    });
  }

  let unknownCount = 0;
  for (const group of groups) {
    for (const row of group.fields) {
      for (const cell of row.cells) if (cell.unknown) unknownCount += 1;
    }
  }
  return {
    articleId: detail.article_id,
    hasForm: detail.form !== null,
    groups,
    linkage: {
      decision: detail.linkage_decision,
      recordId: detail.matched_record_id,
      dayOffset: detail.day_offset,
    },
    unknownCount,
  };
}

/** Replace one group's answers in a detail snapshot without touching the rest. */
export function applyGroupAnswers(
  detail: IncidentDetail,
  answers: Record<string, AnswerEntry>,
): IncidentDetail {
  if (detail.form === null) return detail;
  return { ...detail, form: { ...detail.form, ...answers } };
}
