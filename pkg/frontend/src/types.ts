// Wire formats of the annotation service. The UI never sees gold labels:
// nothing here carries one.

export type Role = "tutor" | "student";
export type TagRole = Role | "both";

export interface SchemeTag {
  name: string;
  role: TagRole;
}

export interface ContextLine {
  role: Role;
  text: string;
}

export interface TicketSentence {
  id: string;
  text: string;
  role: Role;
  context: ContextLine[];
}

export interface BatchTicket {
  ticket_id: string;
  sentences: TicketSentence[];
  strategy_used: string;
  model_generation: number;
  final: boolean;
}

export interface DataMapPoint {
  id: string;
  tag: string;
  role: Role;
  confidence: number;
  variability: number;
  correctness: number;
  bucket: "Easy" | "Medium" | "Hard" | "Impossible";
}

export interface Metrics {
  accuracy: number;
  macro_f1: number;
}

export interface ProjectStatus {
  project_id: string;
  state: "idle" | "training";
  total_sentences: number;
  labeled: number;
  pool: number;
  model_generation: number;
  strategy: string;
  per_tag_counts: Record<string, number>;
  kappa: number | null;
  metrics: Metrics | null;
  data_map: DataMapPoint[] | null;
}

export interface LabelSubmission {
  ticket_id: string;
  annotator_id: string;
  labels: { sentence_id: string; tag: string }[];
}
