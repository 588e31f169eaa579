/** Wire shapes of the gateway admin API (version 1). */

export interface CertMapping {
  cert_id: number;
  subject_dn: string;
  not_after: string | null;
}

export interface AdminUser {
  user_id: number;
  username: string;
  email: string;
  active: boolean;
  ts_principal: string | null;
  mappings: CertMapping[];
}

export interface PendingCredential {
  pending_id: number;
  kind: "saml" | "pki";
  identifier: string;
  context: string;
  first_seen: string;
  last_seen: string;
  attempt_count: number;
}

export interface UserPatch {
  email?: string;
  ts_principal?: string | null;
  active?: boolean;
}
