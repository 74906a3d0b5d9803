/** Wire types for the chat service API. */

export interface ChatReply {
  recipient_id: string;
  text: string;
}

export interface IntentScore {
  name: string;
  confidence: number;
}

export interface ParsedEntity {
  entity: string;
  raw_value: string;
  value: string;
  start: number;
  end: number;
}

export interface ParsePayload {
  intent_ranking: IntentScore[];
  entities: ParsedEntity[];
}

export interface TrackerView {
  sender_id: string;
  slots: Record<string, string | null>;
  last_action: string | null;
  last_intent_ranking: [string, number][];
  last_entities: unknown[];
  last_action_chain: string[];
}

export interface HealthPayload {
  status: string;
  model_fingerprint: string;
}
