/**
 * Typed client for the coordinating-center HTTP API.
 *
 * The session token lives in memory only — never in localStorage or
 * cookies — so closing the page ends the session on the client side.
 * Mutating calls attach a generated Idempotency-Key so an accidental
 * double-submit replays the original response instead of re-running.
 */

export interface ApiErrorBody {
    code: string;
    message: string;
    details?: string[];
    reason?: string;
    allowed_from?: string[];
}

export class ApiError extends Error {
    constructor(
        public status: number,
        public body: ApiErrorBody,
    ) {
        super(body.message || `HTTP ${status}`);
    }
}

export interface CriterionInputs {
    dre_palpable: boolean;
    histology_aggressive: boolean;
    gleason_score: number;
    psa_ng_ml: number;
    positive_cores: number;
    total_cores: number;
}

export interface SelfCheckResult {
    overall: 'ELIGIBLE' | 'INELIGIBLE';
    verdicts: Record<string, boolean>;
    failed: string[];
    next_steps: string;
    ruleset_version: string;
}

export interface AccountInfo {
    account_id: string;
    username: string;
    role: 'PATIENT' | 'COORDINATOR' | 'INVESTIGATOR' | 'RESEARCHER' | 'DCC_ADMIN';
    site_id: string | null;
    patient_id: string | null;
    must_change_password: boolean;
    disabled: boolean;
}

export interface LoginResult {
    token: string;
    expires_at: string;
    account: AccountInfo;
}

export interface FormInfo {
    form_name: string;
    fields: Record<string, unknown>;
    status: 'EMPTY' | 'IN_PROGRESS' | 'COMPLETE';
    last_edited_by: string | null;
    last_edited_at: string | null;
}

export interface AssessmentInfo {
    assessment_id: string;
    kind: 'SELF_SCREEN' | 'PHYSICIAN_VALIDATION';
    inputs: CriterionInputs;
    verdicts: Record<string, boolean>;
    overall: 'ELIGIBLE' | 'INELIGIBLE';
    assessed_at: string;
    assessor: string | null;
}

export interface SpecimenInfo {
    specimen_id: string;
    patient_id: string;
    kind: 'URINE' | 'SERUM';
    collected_at: string;
    collected_by: string;
    notes: string | null;
}

export interface PatientRecord {
    patient_id: string;
    site_id: string;
    workflow_state: string;
    state_version: number;
    created_at: string;
    updated_at: string;
    account_id: string | null;
    assessments: AssessmentInfo[];
    forms: Record<string, FormInfo>;
    specimens: SpecimenInfo[];
}

export interface FieldSpec {
    name: string;
    type: 'text' | 'integer' | 'decimal' | 'date' | 'enum';
    required: boolean;
    values: string[];
    identifying: boolean;
}

export interface FormSchemas {
    forms: Record<string, { fields: FieldSpec[] }>;
}

let idempotencyCounter = 0;

function newIdempotencyKey(): string {
    idempotencyCounter += 1;
    const rand = Math.random().toString(36).slice(2, 10);
    return `ui-${Date.now()}-${idempotencyCounter}-${rand}`;
}

export class ApiClient {
    private token: string | null = null;

    constructor(private baseUrl: string) {}

    get hasSession(): boolean {
        return this.token !== null;
    }

    clearSession(): void {
        this.token = null;
    }

    private async request<T>(
        method: string,
        path: string,
        body?: unknown,
        idempotencyKey?: string,
    ): Promise<T> {
        const headers: Record<string, string> = {};
        if (body !== undefined) headers['Content-Type'] = 'application/json';
        if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
        if (idempotencyKey) headers['Idempotency-Key'] = idempotencyKey;
        const response = await fetch(`${this.baseUrl}${path}`, {
            method,
            headers,
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const text = await response.text();
        const parsed = text ? JSON.parse(text) : {};
        if (!response.ok) {
            const err = (parsed as { error?: ApiErrorBody }).error ?? {
                code: 'http_error',
                message: `HTTP ${response.status}`,
            };
            throw new ApiError(response.status, err);
        }
        return parsed as T;
    }

    // -- anonymous ---------------------------------------------------------

    selfCheck(inputs: CriterionInputs): Promise<SelfCheckResult> {
        return this.request('POST', '/api/v1/eligibility/self-check', { inputs });
    }

    formSchemas(): Promise<FormSchemas> {
        return this.request('GET', '/api/v1/schemas');
    }

    // -- session -----------------------------------------------------------

    async login(username: string, password: string): Promise<LoginResult> {
        const result = await this.request<LoginResult>('POST', '/api/v1/auth/login', {
            username,
            password,
        });
        this.token = result.token;
        return result;
    }

    changePassword(oldPassword: string, newPassword: string): Promise<{ account: AccountInfo }> {
        return this.request('POST', '/api/v1/auth/password', {
            old_password: oldPassword,
            new_password: newPassword,
        });
    }

    async logout(): Promise<void> {
        try {
            await this.request('POST', '/api/v1/auth/logout');
        } finally {
            this.token = null;
        }
    }

    // -- patients ----------------------------------------------------------

    listPatients(state?: string): Promise<{ patients: PatientRecord[] }> {
        const query = state ? `?state=${encodeURIComponent(state)}` : '';
        return this.request('GET', `/api/v1/patients${query}`);
    }

    getPatient(patientId: string): Promise<PatientRecord> {
        return this.request('GET', `/api/v1/patients/${patientId}`);
    }

    registerProspect(siteId: string, inputs: CriterionInputs): Promise<PatientRecord> {
        return this.request(
            'POST',
            '/api/v1/patients',
            { site_id: siteId, inputs },
            newIdempotencyKey(),
        );
    }

    recordConsultation(patientId: string, expectedVersion: number): Promise<PatientRecord> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/consultation`,
            { expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }

    physicianValidate(
        patientId: string,
        inputs: CriterionInputs,
        expectedVersion: number,
    ): Promise<PatientRecord> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/validation`,
            { inputs, expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }

    issueCredentials(
        patientId: string,
        username: string,
        expectedVersion: number,
    ): Promise<{ patient: PatientRecord; username: string; temporary_password: string }> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/credentials`,
            { username, expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }

    writeForm(
        patientId: string,
        formName: string,
        values: Record<string, unknown>,
        expectedVersion: number,
    ): Promise<PatientRecord> {
        return this.request(
            'PUT',
            `/api/v1/patients/${patientId}/forms/${formName}`,
            { values, expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }

    submitEnrollment(
        patientId: string,
        expectedVersion: number,
        idempotencyKey: string,
    ): Promise<PatientRecord> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/enrollment`,
            { expected_version: expectedVersion },
            idempotencyKey,
        );
    }

    withdraw(patientId: string, reason: string, expectedVersion: number): Promise<PatientRecord> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/withdrawal`,
            { reason, expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }

    registerSpecimen(
        patientId: string,
        kind: 'URINE' | 'SERUM',
        expectedVersion: number,
    ): Promise<{ patient: PatientRecord; specimen: SpecimenInfo }> {
        return this.request(
            'POST',
            `/api/v1/patients/${patientId}/specimens`,
            { kind, expected_version: expectedVersion },
            newIdempotencyKey(),
        );
    }
}

export { newIdempotencyKey };
